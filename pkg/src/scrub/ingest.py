"""Submission channels: bundles, history-less archives, and remotes.

Archive ingestion builds a single synthetic initial commit so the
source tree becomes a versioned repository; oversized files are swapped
for pointer stubs before the blob store ever sees them. The slug
helpers normalize repository URLs into names that are safe both as
filesystem entries and as hosting-platform project slugs.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .errors import EmptyTree
from .git_backend import bundle_from_mirror, load_repository, mirror_remote, write_bundle
from .repo_model import Blob, Commit, RepoModel, compute_commit_id

DEFAULT_THRESHOLD_MB = 95
_MB = 2**20

SYNTHETIC_AUTHOR = "Ingest Bot"
SYNTHETIC_EMAIL = "ingest@example.invalid"


class Channel(str, Enum):
    BUNDLE = "BUNDLE"
    ARCHIVE = "ARCHIVE"
    REMOTE = "REMOTE"


@dataclass
class IngestReport:
    channel: Channel
    slug: str
    bundle_path: Path | None = None
    synthetic: bool = False
    large_files: list[tuple[str, float]] = field(default_factory=list)


def _sanitize(text: str) -> str:
    """Shared tail of the slug rules.

    Disallowed-character runs become one '-'; runs of three or more
    hyphens collapse to the '--' separator (a plain `-+ -> -` collapse
    would destroy the documented `--` separators and break idempotence);
    leading/trailing '.'/'-' are trimmed.
    """
    text = re.sub(r"[^A-Za-z0-9.-]+", "-", text)
    text = re.sub(r"-{3,}", "--", text)
    text = re.sub(r"^[.-]+", "", text)
    text = re.sub(r"[.-]+$", "", text)
    return text


def _strip_scheme_and_host(url: str) -> str:
    s = re.sub(r"^[a-zA-Z]+://", "", url)
    s = s.replace(":", "/", 1)
    s = re.sub(r"^[^@/]+@", "", s)
    if "/" in s:
        s = s.split("/", 1)[1]
    return s.lstrip("/")


def _suffix_guard(name: str) -> str:
    if not name:
        return "repo"
    if name.endswith(".git") or name.endswith(".atom"):
        return name + "-repo"
    return name


def safe_name(url: str) -> str:
    """Full-path slug: host stripped, path separators become '--'."""
    path = _strip_scheme_and_host(url.removesuffix(".git"))
    segments = [seg for seg in path.split("/") if seg]
    slug = "--".join(_sanitize(seg) for seg in segments)
    slug = _sanitize(slug)  # re-trim in case a segment sanitized to ''
    return _suffix_guard(slug)


def repo_only_name(url: str) -> str:
    """Last path segment only, with the same sanitization rules."""
    url = url.strip().rstrip("/").removesuffix(".git")
    path = _strip_scheme_and_host(url)
    base = path.rsplit("/", 1)[-1]
    return _suffix_guard(_sanitize(base))


def pointer_stub(size: int, digest: str) -> bytes:
    return f"scrub-lfs-pointer v1\nsize {size}\nsha256 {digest}\n".encode("ascii")


def ingest_archive(
    directory: str | Path, threshold_mb: float = DEFAULT_THRESHOLD_MB
) -> tuple[RepoModel, IngestReport]:
    """Stage an unpacked source tree as one synthetic initial commit.

    Files strictly larger than the threshold (binary megabytes) are
    replaced in-tree by a pointer stub and reported in ``large_files``.
    """
    root = Path(directory)
    files = sorted(p for p in root.rglob("*") if p.is_file() and ".git" not in p.parts)
    if not files:
        raise EmptyTree(f"{root} contains no files")

    blobs: dict[str, Blob] = {}
    tree: dict[str, str] = {}
    large: list[tuple[str, float]] = []
    max_mtime = 0
    for path in files:
        rel = path.relative_to(root).as_posix()
        data = path.read_bytes()
        max_mtime = max(max_mtime, int(path.stat().st_mtime))
        if len(data) > threshold_mb * _MB:
            large.append((rel, round(len(data) / _MB, 2)))
            data = pointer_stub(len(data), hashlib.sha256(data).hexdigest())
        blob = Blob.from_bytes(data)
        blobs[blob.id] = blob
        tree[rel] = blob.id

    commit = Commit(
        id="",
        parents=(),
        author_name=SYNTHETIC_AUTHOR,
        author_email=SYNTHETIC_EMAIL,
        timestamp=max_mtime,
        tz_offset="+0000",
        message="Initial import",
        tree=tree,
    )
    cid = compute_commit_id(commit)
    commit = replace(commit, id=cid)
    repo = RepoModel(
        commits={cid: commit},
        blobs=blobs,
        refs={"refs/heads/main": cid},
        head="refs/heads/main",
    )
    repo.validate()
    report = IngestReport(
        channel=Channel.ARCHIVE, slug=_sanitize(root.name) or "repo",
        synthetic=True, large_files=large,
    )
    return repo, report


def ingest_remote(url: str, work_dir: str | Path) -> tuple[RepoModel, IngestReport]:
    """Mirror every advertised ref from a remote and bundle it."""
    work = Path(work_dir)
    slug = safe_name(url)
    mirror = mirror_remote(url, work / f"{slug}.git")
    bundle = bundle_from_mirror(mirror, work / f"{repo_only_name(url)}.bundle")
    repo = load_repository(bundle)
    report = IngestReport(channel=Channel.REMOTE, slug=slug, bundle_path=bundle)
    return repo, report


def ingest_bundle(path: str | Path) -> tuple[RepoModel, IngestReport]:
    repo = load_repository(path)
    slug = _sanitize(Path(path).stem) or "repo"
    return repo, IngestReport(channel=Channel.BUNDLE, slug=slug, bundle_path=Path(path))


def write_archive_bundle(repo: RepoModel, out_path: str | Path) -> Path:
    return write_bundle(repo, out_path)
