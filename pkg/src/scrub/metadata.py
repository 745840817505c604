"""Per-repository metadata record, selection filter, consistency checks.

The record is one CSV row: identity, language distribution, license,
history shape, sizes, and code metrics. Line counting distinguishes
``loc`` (non-blank lines in supported programming languages) from
``raw_loc`` (non-blank lines in any text file); their ratio proxies how
much of a codebase is in-scope code.
"""

from __future__ import annotations

import csv
import json
import re
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .errors import EmptyRepository
from .repo_model import RepoModel
from .zones import FileClass, LangMap, ZoneKind, classify_file, default_lang_map, extract_functions, extract_zones


class LicenseType(str, Enum):
    MIT = "MIT"
    APACHE_2 = "APACHE_2"
    BSD = "BSD"
    GPL = "GPL"
    LGPL = "LGPL"
    MPL = "MPL"
    PROPRIETARY = "PROPRIETARY"
    UNKNOWN = "UNKNOWN"


class RejectionReason(str, Enum):
    OK = "OK"
    # automated stage
    LOC_BELOW_THRESHOLD = "LOC_BELOW_THRESHOLD"
    UNPARSEABLE = "UNPARSEABLE"
    # review-stage taxonomy: recorded only, never auto-assigned
    ONLY_GENERATED = "ONLY_GENERATED"
    FORK_DUPLICATE = "FORK_DUPLICATE"
    NOT_SOFTWARE = "NOT_SOFTWARE"
    PARTIAL_CODEBASE = "PARTIAL_CODEBASE"
    COURSEWORK = "COURSEWORK"
    AI_GENERATED = "AI_GENERATED"
    BELOW_QUALITY_BAR = "BELOW_QUALITY_BAR"


LOC_THRESHOLD = 1000

# exact CSV column order
FIELD_ORDER = [
    "repo_id",
    "repo_name",
    "languages",
    "extensions",
    "stack",
    "license_type",
    "created_at",
    "commit_count",
    "branch_count",
    "contributors_count",
    "repo_git_history_mb",
    "repo_bundle_mb",
    "repo_worktree_mb",
    "files",
    "loc",
    "raw_loc",
    "avg_func_length",
    "docstring_ratio",
    "duplication_ratio",
    "documentation_cnt",
]


@dataclass
class MetadataRecord:
    repo_id: str
    repo_name: str
    languages: dict[str, float]
    extensions: dict[str, float]
    stack: str
    license_type: LicenseType
    created_at: int
    commit_count: int
    branch_count: int
    contributors_count: int
    repo_git_history_mb: float
    repo_bundle_mb: float
    repo_worktree_mb: float
    files: int
    loc: int
    raw_loc: int
    avg_func_length: float
    docstring_ratio: float
    duplication_ratio: float
    documentation_cnt: int

    def to_row(self) -> dict[str, str]:
        row = {}
        for name in FIELD_ORDER:
            value = getattr(self, name)
            if isinstance(value, dict):
                row[name] = json.dumps(value, sort_keys=True)
            elif isinstance(value, LicenseType):
                row[name] = value.value
            elif isinstance(value, float):
                row[name] = repr(value)
            else:
                row[name] = str(value)
        return row

    @classmethod
    def from_row(cls, row: dict[str, str]) -> "MetadataRecord":
        return cls(
            repo_id=row["repo_id"],
            repo_name=row["repo_name"],
            languages=json.loads(row["languages"]),
            extensions=json.loads(row["extensions"]),
            stack=row["stack"],
            license_type=LicenseType(row["license_type"]),
            created_at=int(row["created_at"]),
            commit_count=int(row["commit_count"]),
            branch_count=int(row["branch_count"]),
            contributors_count=int(row["contributors_count"]),
            repo_git_history_mb=float(row["repo_git_history_mb"]),
            repo_bundle_mb=float(row["repo_bundle_mb"]),
            repo_worktree_mb=float(row["repo_worktree_mb"]),
            files=int(row["files"]),
            loc=int(row["loc"]),
            raw_loc=int(row["raw_loc"]),
            avg_func_length=float(row["avg_func_length"]),
            docstring_ratio=float(row["docstring_ratio"]),
            duplication_ratio=float(row["duplication_ratio"]),
            documentation_cnt=int(row["documentation_cnt"]),
        )


@dataclass
class SelectionDecision:
    accepted: bool
    reason: RejectionReason


@dataclass
class LineCounts:
    loc: int
    raw_loc: int
    per_language: dict[str, int]
    per_extension: dict[str, int]
    files: int


def _non_blank(data: bytes) -> list[bytes]:
    return [ln for ln in data.splitlines() if ln.strip()]


def count_lines(repo: RepoModel, lang_map: Optional[LangMap] = None) -> LineCounts:
    """Counts over the head tree: raw_loc spans all text files, loc only
    files classified as CODE by the language table."""
    lm = lang_map or default_lang_map()
    head = repo.head_commit()
    per_language: dict[str, int] = {}
    per_extension: dict[str, int] = {}
    loc = raw = 0
    for path, bid in head.tree.items():
        blob = repo.blobs[bid]
        if not blob.is_text:
            continue
        n = len(_non_blank(blob.data))
        raw += n
        if classify_file(path, blob.data, lm) is FileClass.CODE:
            loc += n
            language = lm.language_of(path) or "Unknown"
            per_language[language] = per_language.get(language, 0) + n
            dot = path.rsplit("/", 1)[-1].rfind(".")
            ext = path.rsplit("/", 1)[-1][dot:].lower() if dot > 0 else ""
            per_extension[ext] = per_extension.get(ext, 0) + n
    return LineCounts(
        loc=loc, raw_loc=raw, per_language=per_language,
        per_extension=per_extension, files=len(head.tree),
    )


@dataclass
class QualityMetrics:
    avg_func_length: float
    docstring_ratio: float
    duplication_ratio: float
    documentation_cnt: int


def _comment_line_flags(data: bytes, language: str, lm: LangMap) -> tuple[int, int]:
    """(comment_lines, code_lines) among non-blank lines of one file.

    A comment line is one whose non-whitespace bytes all fall inside
    COMMENT zones.
    """
    try:
        zones = [z for z in extract_zones(data, language, lm) if z.kind is ZoneKind.COMMENT]
    except Exception:
        return 0, len(_non_blank(data))
    comment = code = 0
    pos = 0
    for line in data.splitlines(keepends=True):
        start, end = pos, pos + len(line)
        pos = end
        stripped = line.strip()
        if not stripped:
            continue
        lead = len(line) - len(line.lstrip())
        content_start = start + lead
        content_end = content_start + len(stripped)
        covered = any(z.start <= content_start and content_end <= z.end for z in zones)
        if covered:
            comment += 1
        else:
            code += 1
    return comment, code


def quality_metrics(repo: RepoModel, lang_map: Optional[LangMap] = None) -> QualityMetrics:
    lm = lang_map or default_lang_map()
    head = repo.head_commit()
    comment_lines = code_lines = 0
    pooled_lines: list[bytes] = []
    func_lengths: list[int] = []
    documentation_cnt = 0
    for path, bid in sorted(head.tree.items()):
        blob = repo.blobs[bid]
        if not blob.is_text:
            continue
        name = path.rsplit("/", 1)[-1]
        if "/" not in path and name.upper().startswith("README"):
            documentation_cnt += len(blob.data.splitlines())
        if classify_file(path, blob.data, lm) is not FileClass.CODE:
            continue
        language = lm.language_of(path) or ""
        c, k = _comment_line_flags(blob.data, language, lm)
        comment_lines += c
        code_lines += k
        pooled_lines.extend(ln.strip() for ln in _non_blank(blob.data))
        func_lengths.extend(f.line_count for f in extract_functions(blob.data, language, lm))
    duplication = 1 - len(set(pooled_lines)) / len(pooled_lines) if pooled_lines else 0.0
    return QualityMetrics(
        avg_func_length=sum(func_lengths) / len(func_lengths) if func_lengths else 0.0,
        docstring_ratio=comment_lines / code_lines if code_lines else 0.0,
        duplication_ratio=duplication,
        documentation_cnt=documentation_cnt,
    )


@dataclass
class HistoryMetrics:
    created_at: int
    commit_count: int
    branch_count: int
    contributors_count: int


def history_metrics(repo: RepoModel) -> HistoryMetrics:
    """created_at from the oldest author timestamp; commit_count from the
    most recently active branch (max committer timestamp at the tip,
    ref-name order breaking ties)."""
    if not repo.commits or not repo.refs:
        raise EmptyRepository("history metrics need at least one commit")
    created_at = min(c.timestamp for c in repo.commits.values())
    contributors = {(c.author_name, c.author_email) for c in repo.commits.values()}

    branches = sorted(
        n for n in repo.refs
        if n.startswith("refs/heads/") or n.startswith("refs/remotes/")
    )
    branch_count = len(branches)
    candidates = branches or sorted(repo.refs)
    active = min(candidates, key=lambda n: (-repo.commits[repo.refs[n]].committer_timestamp, n))
    commit_count = len(repo.reachable_commits(tips=[repo.refs[active]]))
    return HistoryMetrics(
        created_at=created_at,
        commit_count=commit_count,
        branch_count=branch_count,
        contributors_count=len(contributors),
    )


_LICENSE_SIGNATURES = [
    (LicenseType.LGPL, re.compile(r"GNU LESSER GENERAL PUBLIC LICENSE", re.I)),
    (LicenseType.GPL, re.compile(r"GNU GENERAL PUBLIC LICENSE", re.I)),
    (LicenseType.APACHE_2, re.compile(r"Apache License,?\s+Version 2\.0", re.I)),
    (LicenseType.MIT, re.compile(r"MIT License", re.I)),
    (LicenseType.MPL, re.compile(r"Mozilla Public License", re.I)),
    (LicenseType.BSD, re.compile(r"BSD \d-Clause|Redistribution and use in source and binary forms", re.I)),
    (LicenseType.PROPRIETARY, re.compile(r"proprietary and confidential|all rights reserved\.?\s*$", re.I | re.M)),
]


def detect_license(root_files: dict[str, bytes]) -> LicenseType:
    """Signature scan over root-level LICENSE*/COPYING* files."""
    for name in sorted(root_files):
        base = name.upper()
        if not (base.startswith("LICENSE") or base.startswith("COPYING")):
            continue
        try:
            text = root_files[name].decode("utf-8", "replace")
        except Exception:
            continue
        for license_type, rx in _LICENSE_SIGNATURES:
            if rx.search(text):
                return license_type
    return LicenseType.UNKNOWN


@dataclass
class RepoSizes:
    git_history_mb: float = 0.0
    bundle_mb: float = 0.0
    worktree_mb: float = 0.0


def extract(
    repo: RepoModel,
    repo_name: str,
    sizes: RepoSizes | None = None,
    lang_map: Optional[LangMap] = None,
) -> MetadataRecord:
    """Compose all metric groups into one record; repo_id is fresh random."""
    lm = lang_map or default_lang_map()
    sizes = sizes or RepoSizes()
    counts = count_lines(repo, lm)
    quality = quality_metrics(repo, lm)
    history = history_metrics(repo)

    languages = {
        lang: n / counts.loc for lang, n in sorted(counts.per_language.items())
    } if counts.loc else {}
    extensions = {
        ext: n / counts.loc for ext, n in sorted(counts.per_extension.items())
    } if counts.loc else {}
    top = sorted(languages.items(), key=lambda kv: (-kv[1], kv[0]))[:3]
    stack = ", ".join(f"{lang} {share * 100:.1f}%" for lang, share in top)

    head = repo.head_commit()
    root_files = {
        path: repo.blobs[bid].data for path, bid in head.tree.items() if "/" not in path
    }

    return MetadataRecord(
        repo_id=str(uuid.uuid4()),
        repo_name=repo_name,
        languages=languages,
        extensions=extensions,
        stack=stack,
        license_type=detect_license(root_files),
        created_at=history.created_at,
        commit_count=history.commit_count,
        branch_count=history.branch_count,
        contributors_count=history.contributors_count,
        repo_git_history_mb=sizes.git_history_mb,
        repo_bundle_mb=sizes.bundle_mb,
        repo_worktree_mb=sizes.worktree_mb,
        files=counts.files,
        loc=counts.loc,
        raw_loc=counts.raw_loc,
        avg_func_length=quality.avg_func_length,
        docstring_ratio=quality.docstring_ratio,
        duplication_ratio=quality.duplication_ratio,
        documentation_cnt=quality.documentation_cnt,
    )


def select(record: MetadataRecord | None) -> SelectionDecision:
    """Automated filter: parseable and at least 1,000 lines of code."""
    if record is None:
        return SelectionDecision(accepted=False, reason=RejectionReason.UNPARSEABLE)
    if record.loc < LOC_THRESHOLD:
        return SelectionDecision(accepted=False, reason=RejectionReason.LOC_BELOW_THRESHOLD)
    return SelectionDecision(accepted=True, reason=RejectionReason.OK)


def consistency_check(record: MetadataRecord) -> list[str]:
    anomalies = []
    if record.commit_count == 0 and record.loc > 0:
        anomalies.append("COMMITS_ZERO_WITH_CODE")
    if record.loc > record.raw_loc:
        anomalies.append("LOC_EXCEEDS_RAW")
    if record.languages:
        total = sum(record.languages.values())
        if not 0.999 <= total <= 1.001:
            anomalies.append("SHARES_NOT_NORMALIZED")
    numeric = [
        record.commit_count, record.branch_count, record.contributors_count,
        record.files, record.loc, record.raw_loc, record.avg_func_length,
        record.docstring_ratio, record.documentation_cnt,
        record.repo_git_history_mb, record.repo_bundle_mb, record.repo_worktree_mb,
    ]
    if any(v < 0 for v in numeric):
        anomalies.append("NEGATIVE_FIELD")
    if not 0.0 <= record.duplication_ratio <= 1.0:
        anomalies.append("DUP_RATIO_RANGE")
    return anomalies


def write_csv(records: Iterable[MetadataRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=FIELD_ORDER)
        writer.writeheader()
        for record in records:
            writer.writerow(record.to_row())


def read_csv(path: str | Path) -> list[MetadataRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [MetadataRecord.from_row(row) for row in csv.DictReader(fh)]


def write_json(record: MetadataRecord, path: str | Path) -> None:
    payload = {name: getattr(record, name) for name in FIELD_ORDER}
    payload["license_type"] = record.license_type.value
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=False), "utf-8")
