"""Materialize repositories from git and write them back.

All interaction with the version-control tool goes through a subprocess
(executable from SCRUB_GIT_BIN, default ``git``) with an isolated
configuration environment so host-level git config cannot leak into
object or pack bytes. Loading walks refs, commits, per-commit trees and
blob contents into a :class:`~scrub.repo_model.RepoModel`; writing
streams the model through ``git fast-import`` into a fresh repository
and packages it with ``git bundle create``.

Pack generation is pinned to one thread: multi-threaded delta search
makes pack bytes run-dependent, and downstream checks compare bundles
byte for byte.
"""

from __future__ import annotations

import logging
import os
import subprocess
import tempfile
from pathlib import Path

from .errors import EmptyRepository, MalformedBundle, NetworkError, NoRefs
from .repo_model import GIT_SCHEME, Blob, Commit, RepoModel

log = logging.getLogger(__name__)


def git_bin() -> str:
    return os.environ.get("SCRUB_GIT_BIN", "git")


def _git_env() -> dict:
    env = dict(os.environ)
    env.update(
        {
            "GIT_CONFIG_NOSYSTEM": "1",
            "GIT_CONFIG_GLOBAL": os.devnull,
            "GIT_TERMINAL_PROMPT": "0",
            "LC_ALL": "C",
        }
    )
    return env


def run_git(args: list[str], cwd: str | Path | None = None, check: bool = True,
            input_bytes: bytes | None = None) -> subprocess.CompletedProcess:
    cmd = [git_bin(), *args]
    return subprocess.run(
        cmd,
        cwd=str(cwd) if cwd else None,
        env=_git_env(),
        input=input_bytes,
        capture_output=True,
        check=check,
    )


def _is_git_dir(path: Path) -> bool:
    return (path / ".git").exists() or ((path / "HEAD").is_file() and (path / "objects").is_dir())


def load_repository(source: str | Path) -> RepoModel:
    """Load a bundle file, git directory, or serialized JSON model.

    Raises MALFORMED_BUNDLE when the backend cannot read the source and
    EMPTY_REPOSITORY when it holds no refs.
    """
    src = Path(source)
    if not src.exists():
        raise MalformedBundle(f"source {src} does not exist")
    if src.is_file() and src.suffix == ".json":
        model = RepoModel.from_json(src.read_text("utf-8"))
        if not model.refs:
            raise EmptyRepository(f"{src} holds no refs")
        return model
    if src.is_dir():
        if _is_git_dir(src):
            return _load_from_git_dir(src)
        if not any(src.iterdir()):
            raise EmptyRepository(f"directory {src} is empty")
        raise MalformedBundle(f"directory {src} is not a git repository")
    # anything else is treated as a bundle file
    with tempfile.TemporaryDirectory(prefix="scrub-load-") as tmp:
        mirror = Path(tmp) / "mirror.git"
        proc = run_git(["clone", "--quiet", "--mirror", str(src), str(mirror)], check=False)
        if proc.returncode != 0:
            raise MalformedBundle(
                f"backend cannot read {src}: {proc.stderr.decode('utf-8', 'replace').strip()}"
            )
        return _load_from_git_dir(mirror, head_hint=_bundle_head_hint(src))


def _bundle_head_hint(bundle: Path) -> str | None:
    """Deterministic head from the bundle's advertised HEAD sha.

    Bundles cannot carry symrefs, so HEAD arrives as a bare sha; when
    several branches share it, a re-clone's guess is arbitrary. Pick the
    lexicographically smallest matching branch instead.
    """
    proc = run_git(["bundle", "list-heads", str(bundle)], check=False)
    if proc.returncode != 0:
        return None
    head_sha = None
    refs: list[tuple[str, str]] = []
    for line in proc.stdout.decode("utf-8", "replace").splitlines():
        sha, _, name = line.partition(" ")
        if name == "HEAD":
            head_sha = sha
        elif name:
            refs.append((name, sha))
    if head_sha is None:
        return None
    branches = sorted(n for n, sha in refs if sha == head_sha and n.startswith("refs/heads/"))
    if branches:
        return branches[0]
    anything = sorted(n for n, sha in refs if sha == head_sha)
    return anything[0] if anything else None


def _load_from_git_dir(gitdir: Path, head_hint: str | None = None) -> RepoModel:
    refs: dict[str, str] = {}
    proc = run_git(
        ["for-each-ref", "--format=%(refname)%00%(objectname)%00%(*objectname)"], cwd=gitdir
    )
    for line in proc.stdout.decode("utf-8", "surrogateescape").splitlines():
        if not line:
            continue
        name, target, peeled = line.split("\x00")
        refs[name] = peeled or target
    if not refs:
        raise EmptyRepository(f"{gitdir} holds no refs")

    commit_ids = run_git(["rev-list", "--all"], cwd=gitdir).stdout.decode().split()
    commits: dict[str, Commit] = {}
    blob_ids: set[str] = set()
    trees: dict[str, dict[str, str]] = {}
    for cid in commit_ids:
        tree: dict[str, str] = {}
        out = run_git(["ls-tree", "-r", "-z", cid], cwd=gitdir).stdout
        for entry in out.split(b"\x00"):
            if not entry:
                continue
            meta, path = entry.split(b"\t", 1)
            _mode, otype, sha = meta.split(b" ")
            if otype != b"blob":
                continue  # submodules and other non-blob entries are out of scope
            sha_s = sha.decode("ascii")
            tree[path.decode("utf-8", "surrogateescape")] = sha_s
            blob_ids.add(sha_s)
        trees[cid] = tree

    raw_objects = _cat_file_batch(gitdir, commit_ids + sorted(blob_ids))
    for cid in commit_ids:
        commits[cid] = _parse_commit(cid, raw_objects[cid], trees[cid])
    blobs = {bid: Blob.from_bytes(raw_objects[bid], id=bid) for bid in blob_ids}

    # drop refs whose peeled target is not a commit (e.g. tags of trees)
    refs = {name: cid for name, cid in refs.items() if cid in commits}
    if not refs:
        raise EmptyRepository(f"{gitdir} has refs but none resolve to commits")

    head = head_hint if head_hint in refs else _resolve_head(gitdir, refs)
    model = RepoModel(commits=commits, blobs=blobs, refs=refs, head=head, id_scheme=GIT_SCHEME)
    model.validate()
    return model


def _resolve_head(gitdir: Path, refs: dict[str, str]) -> str:
    proc = run_git(["symbolic-ref", "--quiet", "HEAD"], cwd=gitdir, check=False)
    if proc.returncode == 0:
        name = proc.stdout.decode().strip()
        if name in refs:
            return name
    branches = sorted(n for n in refs if n.startswith("refs/heads/"))
    if branches:
        return branches[0]
    return sorted(refs)[0]


def _cat_file_batch(gitdir: Path, ids: list[str]) -> dict[str, bytes]:
    if not ids:
        return {}
    request = "".join(f"{oid}\n" for oid in ids).encode("ascii")
    proc = run_git(["cat-file", "--batch"], cwd=gitdir, input_bytes=request)
    out = proc.stdout
    objects: dict[str, bytes] = {}
    pos = 0
    while pos < len(out):
        nl = out.index(b"\n", pos)
        header = out[pos:nl].decode("ascii")
        parts = header.split(" ")
        if parts[-1] == "missing":
            raise MalformedBundle(f"object {parts[0]} missing from {gitdir}")
        oid, _otype, size = parts[0], parts[1], int(parts[2])
        start = nl + 1
        objects[oid] = out[start : start + size]
        pos = start + size + 1  # trailing newline after content
    return objects


def _parse_identity(rest: bytes) -> tuple[str, str, int, str]:
    lt = rest.rindex(b"<")
    gt = rest.rindex(b">")
    name = rest[:lt].strip().decode("utf-8", "surrogateescape")
    email = rest[lt + 1 : gt].decode("utf-8", "surrogateescape")
    ts_parts = rest[gt + 1 :].split()
    timestamp = int(ts_parts[0]) if ts_parts else 0
    tz = ts_parts[1].decode("ascii") if len(ts_parts) > 1 else "+0000"
    return name, email, timestamp, tz


def _parse_commit(cid: str, raw: bytes, tree: dict[str, str]) -> Commit:
    header, _, message = raw.partition(b"\n\n")
    parents: list[str] = []
    author = committer = (b"", b"", 0, "+0000")
    a_parsed = c_parsed = None
    for line in header.split(b"\n"):
        if line.startswith(b" "):
            continue  # continuation of a multi-line header (e.g. gpgsig)
        key, _, rest = line.partition(b" ")
        if key == b"parent":
            parents.append(rest.decode("ascii"))
        elif key == b"author":
            a_parsed = _parse_identity(rest)
        elif key == b"committer":
            c_parsed = _parse_identity(rest)
    if a_parsed is None:
        raise MalformedBundle(f"commit {cid} has no author line")
    c_parsed = c_parsed or a_parsed
    return Commit(
        id=cid,
        parents=tuple(parents),
        author_name=a_parsed[0],
        author_email=a_parsed[1],
        timestamp=a_parsed[2],
        tz_offset=a_parsed[3],
        committer_name=c_parsed[0],
        committer_email=c_parsed[1],
        committer_timestamp=c_parsed[2],
        committer_tz_offset=c_parsed[3],
        message=message.decode("utf-8", "surrogateescape"),
        tree=tree,
    )


# ---------------------------------------------------------------------------
# export


def _quote_path(path: str) -> str:
    if any(c in path for c in ('"', "\\", "\n")) or path != path.strip():
        escaped = path.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{escaped}"'
    return path


def _identity_bytes(name: str, email: str, ts: int, tz: str) -> bytes:
    # fast-import forbids <, > and newlines inside identity fields
    clean_name = name.replace("<", "").replace(">", "").replace("\n", " ")
    clean_email = email.replace("<", "").replace(">", "").replace("\n", " ")
    return (
        clean_name.encode("utf-8", "surrogateescape")
        + b" <"
        + clean_email.encode("utf-8", "surrogateescape")
        + b"> "
        + f"{ts} {tz}".encode("ascii")
    )


_SCRATCH_REF = "refs/_scrub/import"


def export_to_git(repo: RepoModel, dest: str | Path) -> Path:
    """Stream the model through fast-import into a fresh bare repository."""
    dest = Path(dest)
    run_git(["init", "--quiet", "--bare", str(dest)])
    stream = bytearray()
    marks: dict[str, int] = {}
    next_mark = 1

    for bid, blob in sorted(repo.blobs.items()):
        marks[bid] = next_mark
        stream += b"blob\nmark :%d\ndata %d\n" % (next_mark, len(blob.data))
        stream += blob.data + b"\n"
        next_mark += 1

    for commit in repo.reachable_commits():
        marks[commit.id] = next_mark
        msg = commit.message.encode("utf-8", "surrogateescape")
        if not commit.parents:
            stream += f"reset {_SCRATCH_REF}\n".encode()
        stream += f"commit {_SCRATCH_REF}\n".encode()
        stream += b"mark :%d\n" % next_mark
        stream += b"author " + _identity_bytes(
            commit.author_name, commit.author_email, commit.timestamp, commit.tz_offset
        ) + b"\n"
        stream += b"committer " + _identity_bytes(
            commit.committer_name,
            commit.committer_email,
            commit.committer_timestamp,
            commit.committer_tz_offset,
        ) + b"\n"
        stream += b"data %d\n" % len(msg)
        stream += msg + b"\n"
        if commit.parents:
            stream += b"from :%d\n" % marks[commit.parents[0]]
            for parent in commit.parents[1:]:
                stream += b"merge :%d\n" % marks[parent]
        stream += b"deleteall\n"
        for path in sorted(commit.tree):
            stream += b"M 100644 :%d %s\n" % (
                marks[commit.tree[path]],
                _quote_path(path).encode("utf-8", "surrogateescape"),
            )
        stream += b"\n"
        next_mark += 1

    for name, cid in sorted(repo.refs.items()):
        stream += f"reset {name}\nfrom :{marks[cid]}\n\n".encode()
    stream += b"done\n"

    run_git(["fast-import", "--quiet", "--done"], cwd=dest, input_bytes=bytes(stream))
    run_git(["update-ref", "-d", _SCRATCH_REF], cwd=dest, check=False)
    head = repo.head if repo.head in repo.refs else sorted(repo.refs)[0]
    run_git(["symbolic-ref", "HEAD", head], cwd=dest, check=False)
    return dest


def write_bundle(repo: RepoModel, out_path: str | Path) -> Path:
    """Export the model and package every ref (plus HEAD) into a bundle."""
    out_path = Path(out_path).absolute()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(prefix="scrub-export-") as tmp:
        gitdir = export_to_git(repo, Path(tmp) / "export.git")
        args = ["-c", "pack.threads=1", "bundle", "create", str(out_path), "--all"]
        if repo.head in repo.refs and repo.head.startswith("refs/heads/"):
            args.append("HEAD")
        run_git(args, cwd=gitdir)
    return out_path


def mirror_remote(url: str, mirror_dir: str | Path) -> Path:
    """Fetch every advertised ref (incl. MR/PR refs) into a bare mirror."""
    mirror = Path(mirror_dir)
    run_git(["init", "--quiet", "--bare", str(mirror)])
    run_git(["remote", "add", "origin", url], cwd=mirror, check=False)
    run_git(["config", "remote.origin.mirror", "true"], cwd=mirror)
    run_git(["config", "--unset-all", "remote.origin.fetch"], cwd=mirror, check=False)
    for refspec in ("+refs/*:refs/*", "+refs/merge-requests/*:refs/merge-requests/*",
                    "+refs/pull/*:refs/pull/*"):
        run_git(["config", "--add", "remote.origin.fetch", refspec], cwd=mirror)
    proc = run_git(["fetch", "--force", "--prune", "origin"], cwd=mirror, check=False)
    if proc.returncode != 0:
        raise NetworkError(
            f"cannot fetch {url}: {proc.stderr.decode('utf-8', 'replace').strip()}"
        )

    head_proc = run_git(["ls-remote", "--symref", url, "HEAD"], cwd=mirror, check=False)
    head_ref = ""
    for line in head_proc.stdout.decode("utf-8", "replace").splitlines():
        if line.startswith("ref:"):
            head_ref = line.split()[1]
            break
    if not head_ref:
        branches = run_git(
            ["for-each-ref", "--format=%(refname)", "refs/heads"], cwd=mirror
        ).stdout.decode().split()
        head_ref = sorted(branches)[0] if branches else ""
    if head_ref:
        run_git(["symbolic-ref", "HEAD", head_ref], cwd=mirror, check=False)

    has_refs = run_git(["show-ref"], cwd=mirror, check=False)
    if has_refs.returncode != 0:
        raise NoRefs(f"no refs fetched from {url} (empty repo or no access)")
    return mirror


def bundle_from_mirror(mirror: str | Path, out_path: str | Path) -> Path:
    out_path = Path(out_path).absolute()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    args = ["-c", "pack.threads=1", "bundle", "create", str(out_path), "--all"]
    head = run_git(["symbolic-ref", "--quiet", "HEAD"], cwd=mirror, check=False)
    if head.returncode == 0:
        args.append("HEAD")  # otherwise a re-clone has to guess the default branch
    run_git(args, cwd=mirror)
    return out_path
