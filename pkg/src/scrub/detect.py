"""Sensitive-content detectors and the finding model.

Five detector classes produce :class:`Finding` records over byte
buffers: secret rules, PII regexes, endpoint rules (private IP ranges
and internal TLDs), dictionary terms (Aho-Corasick), and named-entity
recognition via a pluggable client. Findings carry byte spans against
the scanned surface so replacement can be applied without re-searching.

Masks emitted by the replacement stage are themselves detector-shaped
(an email mask is still an email), so every scan is filtered through
:func:`filter_mask_artifacts` to keep re-scans of sanitized content
empty — that is what makes the whole pipeline idempotent.
"""

from __future__ import annotations

import logging
import re
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import yaml

from .errors import NerUnavailable, RulesFileInvalid
from .ner_client import NerClient

log = logging.getLogger(__name__)


class Detector(str, Enum):
    SECRETS = "SECRETS"
    REGEX_PII = "REGEX_PII"
    ENDPOINT = "ENDPOINT"
    DICTIONARY = "DICTIONARY"
    NER = "NER"


# overlap-resolution priority, strongest first
DETECTOR_PRIORITY = [
    Detector.SECRETS,
    Detector.DICTIONARY,
    Detector.ENDPOINT,
    Detector.REGEX_PII,
    Detector.NER,
]


class Category(str, Enum):
    SECRET = "SECRET"
    EMAIL = "EMAIL"
    PHONE = "PHONE"
    IPV4 = "IPV4"
    JWT = "JWT"
    URL = "URL"
    CUSTOM = "CUSTOM"
    CODENAME = "CODENAME"
    CLIENT = "CLIENT"
    ORG_TERM = "ORG_TERM"
    DOMAIN_TERM = "DOMAIN_TERM"
    TERM = "TERM"
    PRIVATE_IP = "PRIVATE_IP"
    INTERNAL_DOMAIN = "INTERNAL_DOMAIN"
    PERSON = "PERSON"
    ORG = "ORG"
    # commit identity fields, masked by rewrite callbacks rather than scans
    AUTHOR_NAME = "AUTHOR_NAME"
    AUTHOR_EMAIL = "AUTHOR_EMAIL"


class Severity(str, Enum):
    CRITICAL = "CRITICAL"
    HIGH = "HIGH"
    MEDIUM = "MEDIUM"


SEVERITY_BY_CATEGORY = {
    Category.SECRET: Severity.CRITICAL,
    Category.EMAIL: Severity.HIGH,
    Category.PHONE: Severity.HIGH,
    Category.JWT: Severity.HIGH,
    Category.CUSTOM: Severity.HIGH,
    Category.CODENAME: Severity.HIGH,
    Category.CLIENT: Severity.HIGH,
    Category.ORG_TERM: Severity.HIGH,
    Category.DOMAIN_TERM: Severity.HIGH,
    Category.TERM: Severity.HIGH,
    Category.PRIVATE_IP: Severity.HIGH,
    Category.INTERNAL_DOMAIN: Severity.HIGH,
    Category.PERSON: Severity.HIGH,
    Category.ORG: Severity.HIGH,
    Category.IPV4: Severity.MEDIUM,
    Category.URL: Severity.MEDIUM,
}


class Surface(str, Enum):
    WORKING_TREE = "WORKING_TREE"
    COMMIT_META = "COMMIT_META"
    HISTORY_BLOB = "HISTORY_BLOB"


_SURFACE_ORDER = {s: i for i, s in enumerate(Surface)}
_DETECTOR_ORDER = {d: i for i, d in enumerate(Detector)}


@dataclass(frozen=True)
class Locator:
    """Where a finding lives: a path, a commit field, or a bare blob."""

    surface: Surface
    path: Optional[str] = None
    commit: Optional[str] = None
    field: Optional[str] = None
    blob: Optional[str] = None

    def key(self) -> str:
        if self.path is not None:
            return self.path
        if self.commit is not None:
            return f"{self.commit}:{self.field or ''}"
        return self.blob or ""


@dataclass(frozen=True)
class Finding:
    detector: Detector
    category: Category
    severity: Severity
    locator: Locator
    start: int
    end: int
    matched: str
    label: Optional[str] = None  # mask label for CUSTOM rules

    def to_dict(self) -> dict:
        return {
            "detector": self.detector.value,
            "category": self.category.value,
            "severity": self.severity.value,
            "surface": self.locator.surface.value,
            "locator": self.locator.key(),
            "span": [self.start, self.end],
            "matched": self.matched,
        }


def _decode(data: bytes) -> str:
    return data.decode("utf-8", "surrogateescape")


def canonical_order(findings: Iterable[Finding]) -> list[Finding]:
    """Deterministic ordering regardless of scan scheduling.

    Grouped by surface and locator, then span start ascending, span end
    descending (longest first), then detector and category.
    """
    return sorted(
        findings,
        key=lambda f: (
            _SURFACE_ORDER[f.locator.surface],
            f.locator.key(),
            f.start,
            -f.end,
            _DETECTOR_ORDER[f.detector],
            f.category.value,
        ),
    )


# ---------------------------------------------------------------------------
# rules file


@dataclass(frozen=True)
class PatternRule:
    name: str
    pattern: str
    case_insensitive: bool = False
    mask_label: str = "name"
    kind: str = "pii"  # "pii" -> CUSTOM findings, "secret" -> SECRET findings

    def compiled(self) -> re.Pattern[bytes]:
        flags = re.IGNORECASE if self.case_insensitive else 0
        return re.compile(self.pattern.encode("utf-8"), flags)


def load_rules(path: str | Path) -> list[PatternRule]:
    """Load custom rules from a YAML file: a list of {name, pattern, ...}."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise RulesFileInvalid(f"cannot read rules file {path}: {exc}") from exc
    if doc is None:
        return []
    entries = doc.get("patterns", doc) if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise RulesFileInvalid(f"rules file {path} must hold a list of patterns")
    rules = []
    seen: set[str] = set()
    for entry in entries:
        if not isinstance(entry, dict) or "name" not in entry or "pattern" not in entry:
            raise RulesFileInvalid(f"rule entry {entry!r} needs 'name' and 'pattern'")
        name = str(entry["name"])
        if name in seen:
            raise RulesFileInvalid(f"duplicate rule name {name!r}")
        seen.add(name)
        rule = PatternRule(
            name=name,
            pattern=str(entry["pattern"]),
            case_insensitive="i" in str(entry.get("flags", "")),
            mask_label=str(entry.get("mask_label", name) or "name"),
            kind=str(entry.get("kind", "pii")),
        )
        try:
            rule.compiled()
        except re.error as exc:
            raise RulesFileInvalid(f"rule {name!r} does not compile: {exc}") from exc
        rules.append(rule)
    return rules


# ---------------------------------------------------------------------------
# secrets

_SECRET_RULES = [
    ("aws-access-key-id", rb"AKIA[0-9A-Z]{16}", 0),
    ("private-key-header", rb"-----BEGIN [A-Z ]*PRIVATE KEY-----", 0),
    (
        "token-assignment",
        rb"(?:api[_-]?key|token|passwd|password|secret)\s*[:=]\s*['\"][^'\"]{8,}['\"]",
        re.IGNORECASE,
    ),
]


def detect_secrets(
    text: bytes, locator: Locator, rules: Sequence[PatternRule] = ()
) -> list[Finding]:
    """Built-in secret rules plus any rules-file entries of kind 'secret'."""
    findings = []
    compiled = [re.compile(p, f) for _, p, f in _SECRET_RULES]
    compiled += [r.compiled() for r in rules if r.kind == "secret"]
    for rx in compiled:
        for m in rx.finditer(text):
            findings.append(
                Finding(
                    detector=Detector.SECRETS,
                    category=Category.SECRET,
                    severity=Severity.CRITICAL,
                    locator=locator,
                    start=m.start(),
                    end=m.end(),
                    matched=_decode(m.group(0)),
                )
            )
    return findings


# ---------------------------------------------------------------------------
# regex PII

EMAIL_PATTERN = rb"[a-zA-Z0-9_+-.]+@[a-zA-Z0-9-]+\.[a-zA-Z0-9-.]+"
PHONE_PATTERN = rb"\+[1-9][0-9]{7,14}"
_OCTET = rb"(?:25[0-5]|2[0-4][0-9]|1[0-9][0-9]|[1-9]?[0-9])"
IPV4_PATTERN = rb"(?<![0-9.])" + _OCTET + (rb"\." + _OCTET) * 3 + rb"(?![0-9.])"
JWT_PATTERN_STRICT_PAPER = rb"[A-Za-z0-9-_.]+\.[A-Za-z0-9-_.]+\.[A-Za-z0-9-_.]+"
JWT_PATTERN = rb"\beyJ[A-Za-z0-9_-]{7,}\.[A-Za-z0-9_-]{10,}\.[A-Za-z0-9_-]{10,}"
URL_PATTERN = rb"https?://[^\s]+"


def _pii_patterns(strict_paper_patterns: bool) -> list[tuple[Category, re.Pattern[bytes]]]:
    jwt = JWT_PATTERN_STRICT_PAPER if strict_paper_patterns else JWT_PATTERN
    return [
        (Category.JWT, re.compile(jwt)),
        (Category.EMAIL, re.compile(EMAIL_PATTERN)),
        (Category.URL, re.compile(URL_PATTERN)),
        (Category.PHONE, re.compile(PHONE_PATTERN)),
        (Category.IPV4, re.compile(IPV4_PATTERN)),
    ]


def detect_regex_pii(
    text: bytes,
    locator: Locator,
    custom_rules: Sequence[PatternRule] = (),
    strict_paper_patterns: bool = False,
) -> list[Finding]:
    findings = []
    for category, rx in _pii_patterns(strict_paper_patterns):
        for m in rx.finditer(text):
            findings.append(
                Finding(
                    detector=Detector.REGEX_PII,
                    category=category,
                    severity=SEVERITY_BY_CATEGORY[category],
                    locator=locator,
                    start=m.start(),
                    end=m.end(),
                    matched=_decode(m.group(0)),
                )
            )
    for rule in custom_rules:
        if rule.kind != "pii":
            continue
        for m in rule.compiled().finditer(text):
            findings.append(
                Finding(
                    detector=Detector.REGEX_PII,
                    category=Category.CUSTOM,
                    severity=Severity.HIGH,
                    locator=locator,
                    start=m.start(),
                    end=m.end(),
                    matched=_decode(m.group(0)),
                    label=rule.mask_label,
                )
            )
    return findings


# ---------------------------------------------------------------------------
# endpoints

INTERNAL_TLDS = ("internal", "corp", "local", "lan", "intra")
_HOSTNAME_RE = re.compile(
    rb"(?i)(?<![a-z0-9.-])[a-z0-9][a-z0-9.-]*\.(?:" + b"|".join(t.encode() for t in INTERNAL_TLDS) + rb")(?![a-z0-9-])"
)
_IPV4_RE = re.compile(IPV4_PATTERN)


def _is_private_ip(text: str) -> bool:
    octets = [int(p) for p in text.split(".")]
    if octets[0] == 10:
        return True
    if octets[0] == 172 and 16 <= octets[1] <= 31:
        return True
    return octets[0] == 192 and octets[1] == 168


def detect_endpoints(
    text: bytes, locator: Locator, partner_domains: Sequence[str] = ()
) -> list[Finding]:
    """RFC 1918 literals and hostnames under internal or partner TLD suffixes."""
    findings = []
    for m in _IPV4_RE.finditer(text):
        value = m.group(0).decode("ascii")
        if _is_private_ip(value):
            findings.append(
                Finding(
                    detector=Detector.ENDPOINT,
                    category=Category.PRIVATE_IP,
                    severity=Severity.HIGH,
                    locator=locator,
                    start=m.start(),
                    end=m.end(),
                    matched=value,
                )
            )
    host_res = [_HOSTNAME_RE]
    for domain in partner_domains:
        suffix = re.escape(domain.lower().lstrip(".").encode("ascii"))
        host_res.append(
            re.compile(rb"(?i)(?<![a-z0-9.-])(?:[a-z0-9][a-z0-9-]*\.)*" + suffix + rb"(?![a-z0-9-])")
        )
    seen: set[tuple[int, int]] = set()
    for rx in host_res:
        for m in rx.finditer(text):
            span = (m.start(), m.end())
            if span in seen:
                continue
            seen.add(span)
            findings.append(
                Finding(
                    detector=Detector.ENDPOINT,
                    category=Category.INTERNAL_DOMAIN,
                    severity=Severity.HIGH,
                    locator=locator,
                    start=m.start(),
                    end=m.end(),
                    matched=_decode(m.group(0)),
                )
            )
    return findings


# ---------------------------------------------------------------------------
# dictionaries


@dataclass
class Dictionary:
    name: str  # file stem; decides the finding category
    terms: list[str]


_STEM_CATEGORY = {
    "codenames": Category.CODENAME,
    "clients": Category.CLIENT,
    "orgs": Category.ORG_TERM,
    "domains": Category.DOMAIN_TERM,
}


def load_dictionaries(directory: str | Path) -> list[Dictionary]:
    """One dictionary per *.txt file; '#' lines and blanks ignored."""
    out = []
    for path in sorted(Path(directory).glob("*.txt")):
        terms = []
        for line in path.read_text("utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                terms.append(line)
        if not terms:
            log.warning("EMPTY_DICTIONARY: %s has no terms, skipping", path.name)
            continue
        out.append(Dictionary(name=path.stem, terms=terms))
    return out


class AhoCorasick:
    """Multi-pattern matcher over bytes; reports every occurrence.

    Standard construction: a goto trie, failure links computed by BFS,
    and output lists propagated along failure chains so overlapping and
    nested matches are all emitted.
    """

    def __init__(self):
        self._goto: list[dict[int, int]] = [{}]
        self._out: list[list[tuple[int, object]]] = [[]]
        self._fail: list[int] = [0]
        self._built = False

    def add(self, pattern: bytes, value: object) -> None:
        node = 0
        for byte in pattern:
            nxt = self._goto[node].get(byte)
            if nxt is None:
                self._goto.append({})
                self._out.append([])
                self._fail.append(0)
                nxt = len(self._goto) - 1
                self._goto[node][byte] = nxt
            node = nxt
        self._out[node].append((len(pattern), value))
        self._built = False

    def build(self) -> None:
        queue: deque[int] = deque()
        for child in self._goto[0].values():
            self._fail[child] = 0
            queue.append(child)
        while queue:
            node = queue.popleft()
            for byte, child in self._goto[node].items():
                fallback = self._fail[node]
                while fallback and byte not in self._goto[fallback]:
                    fallback = self._fail[fallback]
                self._fail[child] = self._goto[fallback].get(byte, 0)
                if self._fail[child] == child:
                    self._fail[child] = 0
                self._out[child] = self._out[child] + self._out[self._fail[child]]
                queue.append(child)
        self._built = True

    def iter_matches(self, text: bytes) -> Iterator[tuple[int, int, object]]:
        if not self._built:
            self.build()
        node = 0
        for pos, byte in enumerate(text):
            while node and byte not in self._goto[node]:
                node = self._fail[node]
            node = self._goto[node].get(byte, 0)
            for length, value in self._out[node]:
                yield pos + 1 - length, pos + 1, value


def build_dictionary_automaton(dictionaries: Sequence[Dictionary]) -> AhoCorasick:
    ac = AhoCorasick()
    for dictionary in dictionaries:
        category = _STEM_CATEGORY.get(dictionary.name, Category.TERM)
        for term in dictionary.terms:
            ac.add(term.lower().encode("utf-8"), (category, term))
    ac.build()
    return ac


def detect_dictionary(text: bytes, locator: Locator, automaton: AhoCorasick) -> list[Finding]:
    """Case-insensitive term occurrences; one finding per occurrence."""
    lowered = text.lower()
    findings = []
    for start, end, value in automaton.iter_matches(lowered):
        category, _term = value
        findings.append(
            Finding(
                detector=Detector.DICTIONARY,
                category=category,
                severity=Severity.HIGH,
                locator=locator,
                start=start,
                end=end,
                matched=_decode(text[start:end]),
            )
        )
    return findings


# ---------------------------------------------------------------------------
# NER


def detect_ner(
    text: bytes,
    locator: Locator,
    client: NerClient,
    min_score: float = 0.5,
    chunk_size: int = 4000,
    overlap: int = 200,
) -> list[Finding]:
    """Chunked named-entity scan through the configured client.

    The client reports character offsets; they are converted to byte
    offsets here. Entities shorter than 3 characters or below the score
    threshold are discarded client-side; overlap-region duplicates are
    collapsed by span.
    """
    try:
        decoded = text.decode("utf-8")
    except UnicodeDecodeError:
        return []
    if not decoded:
        return []
    step = max(1, chunk_size - overlap)
    raw: dict[tuple[int, int, str], float] = {}
    for base in range(0, len(decoded), step):
        chunk = decoded[base : base + chunk_size]
        if not chunk:
            break
        for ent in client.analyze(chunk, min_score=min_score):
            start, end = base + int(ent["start"]), base + int(ent["end"])
            label = str(ent["label"])
            score = float(ent["score"])
            if score < min_score or end - start < 3 or label not in ("PER", "ORG"):
                continue
            key = (start, end, label)
            raw[key] = max(raw.get(key, 0.0), score)
        if base + chunk_size >= len(decoded):
            break

    # char offset -> byte offset table (one pass)
    byte_at = [0] * (len(decoded) + 1)
    pos = 0
    for i, ch in enumerate(decoded):
        byte_at[i] = pos
        pos += len(ch.encode("utf-8"))
    byte_at[len(decoded)] = pos

    findings = []
    for (start, end, label), _score in sorted(raw.items()):
        category = Category.PERSON if label == "PER" else Category.ORG
        bstart, bend = byte_at[start], byte_at[end]
        findings.append(
            Finding(
                detector=Detector.NER,
                category=category,
                severity=Severity.HIGH,
                locator=locator,
                start=bstart,
                end=bend,
                matched=_decode(text[bstart:bend]),
            )
        )
    return findings


# ---------------------------------------------------------------------------
# mask artifacts

MASK_SCHEMAS = [
    rb"REDACTED_[0-9a-f]{12}",
    rb"user_[0-9a-f]{12}@example\.com",
    rb"author_[0-9a-f]{12}@example\.invalid",
    rb"Person_[0-9a-f]{12}",
    rb"Org_[0-9a-f]{12}",
    rb"Author_[0-9a-f]{12}",
    rb"[0-9a-f]{8}\.example\.invalid",
    rb"192\.0\.2\.(?:25[0-4]|2[0-4][0-9]|1[0-9][0-9]|[1-9][0-9]?)",
    rb"\+0000000000",
    rb"\[[a-z]+:[0-9a-f]{12}\]",
]
_MASK_RE = re.compile(b"|".join(b"(?:" + p + b")" for p in MASK_SCHEMAS))


def is_mask_artifact(candidate: str | bytes) -> bool:
    """True iff the candidate is exactly one of the output mask shapes."""
    data = candidate.encode("utf-8", "surrogateescape") if isinstance(candidate, str) else candidate
    return _MASK_RE.fullmatch(data) is not None


def mask_artifact_spans(text: bytes) -> list[tuple[int, int]]:
    return [(m.start(), m.end()) for m in _MASK_RE.finditer(text)]


def filter_mask_artifacts(text: bytes, findings: Iterable[Finding]) -> list[Finding]:
    """Drop findings that are masks or sit entirely inside a mask span.

    Containment matters: hash12 hex can embed dictionary terms ("cafe",
    "face") or retrigger loose regexes together with adjacent bytes.
    """
    spans = mask_artifact_spans(text)
    out = []
    for f in findings:
        if is_mask_artifact(f.matched):
            continue
        if any(s <= f.start and f.end <= e for s, e in spans):
            continue
        out.append(f)
    return out
