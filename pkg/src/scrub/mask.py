"""Deterministic pseudonym computation and replacement application.

The pseudonym core is hash12: the first 12 hex characters of
HMAC-SHA256(salt, value). For a fixed salt the original→pseudonym map is
a pure function, so the same author, email, or codename resolves to the
same mask everywhere it occurs — structural relationships survive while
identities do not. The salt itself never reaches any released artifact;
manifests carry only its fingerprint.
"""

from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .detect import DETECTOR_PRIORITY, Category, Finding, Surface
from .errors import EmptySalt, SpanOutOfRange, UnmaskableCategory


@dataclass(frozen=True)
class Salt:
    value: bytes

    def __post_init__(self):
        if not self.value:
            raise EmptySalt("salt material must be non-empty")

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.value).hexdigest()[:8]

    @classmethod
    def from_text(cls, text: str) -> "Salt":
        return cls(text.encode("utf-8"))

    @classmethod
    def from_file(cls, path: str | Path) -> "Salt":
        return cls(Path(path).read_bytes().strip())


def hash12(salt: Salt, value: str) -> str:
    """First 12 hex chars of HMAC-SHA256(salt, UTF-8 value).

    surrogateescape keeps the function total over values recovered from
    non-UTF-8 history (commit metadata is not guaranteed to decode).
    """
    digest = hmac.new(salt.value, value.encode("utf-8", "surrogateescape"), hashlib.sha256)
    return digest.hexdigest()[:12]


def _ip_mask(h12: str) -> str:
    k = int(h12, 16) % 254 + 1
    return f"192.0.2.{k}"


def mask_for(category: Category, value: str, salt: Salt, label: str | None = None) -> str:
    """Replacement string for one original value.

    Templates follow the fixed mask schema per category; CUSTOM rules
    supply their mask label (falling back to "name").
    """
    h12 = hash12(salt, value)
    if category is Category.PERSON:
        return f"Person_{h12}"
    if category is Category.ORG:
        return f"Org_{h12}"
    if category is Category.EMAIL:
        return f"user_{h12}@example.com"
    if category is Category.AUTHOR_EMAIL:
        return f"author_{h12}@example.invalid"
    if category is Category.AUTHOR_NAME:
        return f"Author_{h12}"
    if category in (Category.SECRET, Category.JWT):
        return f"REDACTED_{h12}"
    if category in (Category.INTERNAL_DOMAIN, Category.DOMAIN_TERM):
        return f"{h12[:8]}.example.invalid"
    if category in (Category.PRIVATE_IP, Category.IPV4):
        return _ip_mask(h12)
    if category is Category.PHONE:
        return "+0000000000"
    if category is Category.URL:
        return f"[url:{h12}]"
    if category is Category.CUSTOM:
        return f"[{label or 'name'}:{h12}]"
    if category is Category.CODENAME:
        return f"[codename:{h12}]"
    if category is Category.CLIENT:
        return f"[client:{h12}]"
    if category is Category.ORG_TERM:
        return f"[org:{h12}]"
    if category is Category.TERM:
        return f"[term:{h12}]"
    raise UnmaskableCategory(f"no mask template for category {category}")


_PRIORITY_INDEX = {d: i for i, d in enumerate(DETECTOR_PRIORITY)}


def resolve_overlaps(findings: Sequence[Finding]) -> list[Finding]:
    """Reduce canonically ordered findings to a non-overlapping set.

    The longest span wins; ties go to the stronger detector
    (secrets > dictionary > endpoint > regex > NER), then leftmost.
    Findings from different locators never conflict.
    """
    by_locator: dict[tuple, list[Finding]] = {}
    for f in findings:
        by_locator.setdefault((f.locator.surface, f.locator.key()), []).append(f)

    kept: list[Finding] = []
    for group in by_locator.values():
        candidates = sorted(
            group,
            key=lambda f: (-(f.end - f.start), _PRIORITY_INDEX[f.detector], f.start, f.category.value),
        )
        accepted: list[Finding] = []
        for f in candidates:
            if all(f.end <= g.start or f.start >= g.end for g in accepted):
                accepted.append(f)
        kept.extend(accepted)

    from .detect import canonical_order

    return canonical_order(kept)


@dataclass
class ManifestEntry:
    """One original→pseudonym mapping with its occurrence accounting."""

    category: Category
    original: str
    pseudonym: str
    occurrences: int = 0
    surfaces: set[Surface] = field(default_factory=set)

    def to_dict(self, redacted: bool = False) -> dict:
        rec = {
            "category": self.category.value,
            "pseudonym": self.pseudonym,
            "occurrences": self.occurrences,
            "surfaces": sorted(s.value for s in self.surfaces),
        }
        if not redacted:
            rec["original"] = self.original
        return rec


class RedactionManifest:
    """Aggregated ledger of every replacement made in one pipeline run."""

    def __init__(self, salt: Salt):
        self.salt_fingerprint = salt.fingerprint
        self.entries: dict[tuple[Category, str], ManifestEntry] = {}

    def record(self, category: Category, original: str, pseudonym: str, surface: Surface) -> None:
        key = (category, original)
        entry = self.entries.get(key)
        if entry is None:
            entry = ManifestEntry(category=category, original=original, pseudonym=pseudonym)
            self.entries[key] = entry
        entry.occurrences += 1
        entry.surfaces.add(surface)

    def merge(self, other: "RedactionManifest") -> None:
        for key, entry in other.entries.items():
            mine = self.entries.get(key)
            if mine is None:
                self.entries[key] = entry
            else:
                mine.occurrences += entry.occurrences
                mine.surfaces.update(entry.surfaces)

    def __len__(self) -> int:
        return len(self.entries)

    def sorted_entries(self) -> list[ManifestEntry]:
        return [self.entries[k] for k in sorted(self.entries, key=lambda k: (k[0].value, k[1]))]

    def write_jsonl(self, path: str | Path, redacted: bool = False) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"salt_fingerprint": self.salt_fingerprint}) + "\n")
            for entry in self.sorted_entries():
                fh.write(json.dumps(entry.to_dict(redacted=redacted), sort_keys=True) + "\n")


def apply_replacements(
    text: bytes,
    findings: Sequence[Finding],
    salt: Salt,
    manifest: RedactionManifest | None = None,
) -> tuple[bytes, RedactionManifest]:
    """Replace every finding span, back to front so offsets stay valid.

    Bytes outside the union of spans are untouched. Entries aggregate by
    (category, original value).
    """
    manifest = manifest if manifest is not None else RedactionManifest(salt)
    ordered = sorted(findings, key=lambda f: f.start, reverse=True)
    out = text
    last_start = len(text) + 1
    for f in ordered:
        if not (0 <= f.start < f.end <= len(text)):
            raise SpanOutOfRange(f"span [{f.start}, {f.end}) outside text of length {len(text)}")
        if f.end > last_start:
            raise SpanOutOfRange("overlapping findings passed to apply_replacements")
        last_start = f.start
        pseudonym = mask_for(f.category, f.matched, salt, label=f.label)
        out = out[: f.start] + pseudonym.encode("ascii") + out[f.end :]
        manifest.record(f.category, f.matched, pseudonym, f.locator.surface)
    return out, manifest
