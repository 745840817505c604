"""In-memory model of a versioned repository.

The model is a content-addressed commit DAG over a flat blob store:
commits reference parent commits by id and map paths directly to blob
ids (no nested tree objects). It has two sources: built directly in
memory (tests, archive ingestion) or materialized from a real git
repository by :mod:`scrub.git_backend`.

Ids are backend-specific. Models built in memory use SHA-256 over a
canonical length-prefixed serialization of the commit fields; models
loaded from git keep git's native object ids. ``rewrite_history`` always
re-addresses the output with the in-memory scheme — exporting through
the git backend restores native ids.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

from .errors import CallbackFailure

MEMORY_SCHEME = "memory"
GIT_SCHEME = "git"


def blob_id_for(data: bytes) -> str:
    """Content digest used for blobs in the in-memory scheme."""
    return hashlib.sha256(data).hexdigest()


def is_text(data: bytes) -> bool:
    """A blob is text iff it decodes as UTF-8 and contains no NUL byte."""
    if b"\x00" in data:
        return False
    try:
        data.decode("utf-8")
    except UnicodeDecodeError:
        return False
    return True


@dataclass(frozen=True)
class Blob:
    id: str
    data: bytes
    is_text: bool

    @classmethod
    def from_bytes(cls, data: bytes, id: str | None = None) -> "Blob":
        return cls(id=id or blob_id_for(data), data=data, is_text=is_text(data))


@dataclass(frozen=True)
class Commit:
    """One commit: parents, identity fields, timestamps, message, flat tree.

    Timestamps are (seconds since epoch, tz offset string) pairs, matching
    git's representation so they survive round-trips byte-identically.
    Committer fields mirror the author fields; synthetic commits set both
    sides equal.
    """

    id: str
    parents: tuple[str, ...]
    author_name: str
    author_email: str
    timestamp: int
    tz_offset: str
    message: str
    tree: dict[str, str]  # path -> blob id
    committer_name: str = ""
    committer_email: str = ""
    committer_timestamp: int = 0
    committer_tz_offset: str = "+0000"

    def __post_init__(self):
        if not self.committer_name and not self.committer_email:
            object.__setattr__(self, "committer_name", self.author_name)
            object.__setattr__(self, "committer_email", self.author_email)
            object.__setattr__(self, "committer_timestamp", self.timestamp)
            object.__setattr__(self, "committer_tz_offset", self.tz_offset)


def _field_bytes(value: str | bytes) -> bytes:
    if isinstance(value, str):
        value = value.encode("utf-8", "surrogateescape")
    return struct.pack(">Q", len(value)) + value


def compute_commit_id(commit: Commit) -> str:
    """SHA-256 of the canonical, length-prefixed field serialization.

    Field order is fixed; tree entries are sorted by path. The id field
    itself is excluded, so two commits with equal remaining fields hash
    identically.
    """
    h = hashlib.sha256()
    h.update(_field_bytes(",".join(commit.parents)))
    h.update(_field_bytes(commit.author_name))
    h.update(_field_bytes(commit.author_email))
    h.update(_field_bytes(str(commit.timestamp)))
    h.update(_field_bytes(commit.tz_offset))
    h.update(_field_bytes(commit.committer_name))
    h.update(_field_bytes(commit.committer_email))
    h.update(_field_bytes(str(commit.committer_timestamp)))
    h.update(_field_bytes(commit.committer_tz_offset))
    h.update(_field_bytes(commit.message))
    for path in sorted(commit.tree):
        h.update(_field_bytes(path))
        h.update(_field_bytes(commit.tree[path]))
    return h.hexdigest()


@dataclass
class RepoModel:
    """Immutable-by-convention snapshot of a whole repository.

    Invariants (enforced by :meth:`validate`): every ref resolves to an
    existing commit, every tree entry resolves to an existing blob, every
    parent id resolves, and ``head`` names an existing ref.
    """

    commits: dict[str, Commit] = field(default_factory=dict)
    blobs: dict[str, Blob] = field(default_factory=dict)
    refs: dict[str, str] = field(default_factory=dict)
    head: str = ""
    id_scheme: str = MEMORY_SCHEME

    def validate(self) -> None:
        for name, cid in self.refs.items():
            if cid not in self.commits:
                raise ValueError(f"ref {name} points to missing commit {cid}")
        for commit in self.commits.values():
            for pid in commit.parents:
                if pid not in self.commits:
                    raise ValueError(f"commit {commit.id} has missing parent {pid}")
            for path, bid in commit.tree.items():
                if bid not in self.blobs:
                    raise ValueError(f"{commit.id}:{path} points to missing blob {bid}")
        if self.refs and self.head not in self.refs:
            raise ValueError(f"head {self.head!r} is not a ref")

    def head_commit(self) -> Commit:
        return self.commits[self.refs[self.head]]

    def reachable_commits(self, tips: Iterable[str] | None = None) -> list[Commit]:
        """Commits reachable from the given tips (default: all refs), parents first."""
        if tips is None:
            tips = self.refs.values()
        seen: set[str] = set()
        order: list[Commit] = []

        def visit(cid: str) -> None:
            stack = [cid]
            while stack:
                cur = stack[-1]
                if cur in seen:
                    stack.pop()
                    continue
                pending = [p for p in self.commits[cur].parents if p not in seen]
                if pending:
                    stack.extend(pending)
                    continue
                stack.pop()
                seen.add(cur)
                order.append(self.commits[cur])

        for tip in tips:
            visit(tip)
        return order

    def to_json(self) -> str:
        payload = {
            "id_scheme": self.id_scheme,
            "head": self.head,
            "refs": dict(sorted(self.refs.items())),
            "commits": [
                {
                    "id": c.id,
                    "parents": list(c.parents),
                    "author_name": c.author_name,
                    "author_email": c.author_email,
                    "timestamp": c.timestamp,
                    "tz_offset": c.tz_offset,
                    "committer_name": c.committer_name,
                    "committer_email": c.committer_email,
                    "committer_timestamp": c.committer_timestamp,
                    "committer_tz_offset": c.committer_tz_offset,
                    "message": c.message,
                    "tree": dict(sorted(c.tree.items())),
                }
                for c in sorted(self.commits.values(), key=lambda c: c.id)
            ],
            "blobs": [
                {"id": b.id, "is_text": b.is_text}
                | ({"text": b.data.decode("utf-8")} if b.is_text else {"base64": _b64(b.data)})
                for b in sorted(self.blobs.values(), key=lambda b: b.id)
            ],
        }
        return json.dumps(payload, indent=1, sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> "RepoModel":
        payload = json.loads(text)
        blobs = {}
        for rec in payload["blobs"]:
            data = rec["text"].encode("utf-8") if "text" in rec else _unb64(rec["base64"])
            blobs[rec["id"]] = Blob(id=rec["id"], data=data, is_text=rec["is_text"])
        commits = {}
        for rec in payload["commits"]:
            commits[rec["id"]] = Commit(
                id=rec["id"],
                parents=tuple(rec["parents"]),
                author_name=rec["author_name"],
                author_email=rec["author_email"],
                timestamp=rec["timestamp"],
                tz_offset=rec["tz_offset"],
                committer_name=rec["committer_name"],
                committer_email=rec["committer_email"],
                committer_timestamp=rec["committer_timestamp"],
                committer_tz_offset=rec["committer_tz_offset"],
                message=rec["message"],
                tree=dict(rec["tree"]),
            )
        model = cls(
            commits=commits,
            blobs=blobs,
            refs=dict(payload["refs"]),
            head=payload["head"],
            id_scheme=payload.get("id_scheme", MEMORY_SCHEME),
        )
        model.validate()
        return model


def _b64(data: bytes) -> str:
    import base64

    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    import base64

    return base64.b64decode(text)


class RepoBuilder:
    """Helper for constructing in-memory models commit by commit."""

    def __init__(self):
        self.model = RepoModel()
        self._clock = 1_600_000_000

    def add_blob(self, data: bytes) -> str:
        blob = Blob.from_bytes(data)
        self.model.blobs[blob.id] = blob
        return blob.id

    def commit(
        self,
        tree: dict[str, bytes],
        parents: tuple[str, ...] = (),
        author: str = "Dev One",
        email: str = "dev1@example.org",
        message: str = "update",
        timestamp: int | None = None,
        tz_offset: str = "+0000",
        ref: str = "refs/heads/main",
    ) -> str:
        if timestamp is None:
            self._clock += 60
            timestamp = self._clock
        tree_ids = {path: self.add_blob(data) for path, data in tree.items()}
        commit = Commit(
            id="",
            parents=parents,
            author_name=author,
            author_email=email,
            timestamp=timestamp,
            tz_offset=tz_offset,
            message=message,
            tree=tree_ids,
        )
        cid = compute_commit_id(commit)
        commit = replace(commit, id=cid)
        self.model.commits[cid] = commit
        self.model.refs[ref] = cid
        if not self.model.head:
            self.model.head = ref
        return cid

    def build(self) -> RepoModel:
        self.model.validate()
        return self.model


def unique_blobs(repo: RepoModel) -> set[str]:
    """Distinct blob ids reachable from any commit on any ref."""
    ids: set[str] = set()
    for commit in repo.reachable_commits():
        ids.update(commit.tree.values())
    return ids


@dataclass
class RewriteCallbacks:
    """Pure transforms applied to every commit during a history rewrite.

    ``name_cb``/``email_cb`` apply to both the author and committer sides.
    ``blob_cb`` receives raw blob bytes and runs once per unique blob.
    ``filename_cb`` returns True to keep a path, False to drop it from
    every rewritten tree.
    """

    name_cb: Callable[[str], str] = lambda s: s
    email_cb: Callable[[str], str] = lambda s: s
    message_cb: Callable[[str], str] = lambda s: s
    blob_cb: Callable[[bytes], bytes] = lambda b: b
    filename_cb: Callable[[str], bool] = lambda p: True


def rewrite_history(
    repo: RepoModel,
    cbs: RewriteCallbacks,
    prune_empty: bool = False,
) -> RepoModel:
    """Apply callbacks to every commit on every ref, parents before children.

    The output DAG is isomorphic to the input (commits whose trees become
    empty are retained unless ``prune_empty``); all ids are recomputed with
    the in-memory scheme; author/committer timestamps are untouched. The
    input model is never mutated; a raising callback aborts the whole
    rewrite with :class:`CallbackFailure`.
    """
    new = RepoModel(id_scheme=MEMORY_SCHEME, head=repo.head)
    blob_map: dict[str, str] = {}
    id_map: dict[str, str] = {}

    def rewritten_blob(bid: str) -> str:
        if bid not in blob_map:
            out = cbs.blob_cb(repo.blobs[bid].data)
            nb = Blob.from_bytes(out)
            new.blobs[nb.id] = nb
            blob_map[bid] = nb.id
        return blob_map[bid]

    try:
        for commit in repo.reachable_commits():
            tree = {
                path: rewritten_blob(bid)
                for path, bid in commit.tree.items()
                if cbs.filename_cb(path)
            }
            out = Commit(
                id="",
                parents=tuple(id_map[p] for p in commit.parents),
                author_name=cbs.name_cb(commit.author_name),
                author_email=cbs.email_cb(commit.author_email),
                timestamp=commit.timestamp,
                tz_offset=commit.tz_offset,
                committer_name=cbs.name_cb(commit.committer_name),
                committer_email=cbs.email_cb(commit.committer_email),
                committer_timestamp=commit.committer_timestamp,
                committer_tz_offset=commit.committer_tz_offset,
                message=cbs.message_cb(commit.message),
                tree=tree,
            )
            cid = compute_commit_id(out)
            id_map[commit.id] = cid
            if cid not in new.commits:
                new.commits[cid] = replace(out, id=cid)
    except Exception as exc:  # noqa: BLE001 - contract: repo left untouched
        raise CallbackFailure(f"rewrite callback raised: {exc!r}") from exc

    new.refs = {name: id_map[cid] for name, cid in repo.refs.items()}
    if prune_empty:
        new = _prune_empty_commits(new)
    new.validate()
    return new


def _prune_empty_commits(repo: RepoModel) -> RepoModel:
    """Drop commits with empty trees, splicing their parents into children."""
    keep: dict[str, Commit] = {}
    remap: dict[str, tuple[str, ...]] = {}

    def resolved(pid: str) -> tuple[str, ...]:
        return remap.get(pid, (pid,))

    for commit in repo.reachable_commits():
        parents: list[str] = []
        for pid in commit.parents:
            for rp in resolved(pid):
                if rp not in parents:
                    parents.append(rp)
        if commit.tree:
            out = replace(commit, id="", parents=tuple(parents))
            cid = compute_commit_id(out)
            keep[cid] = replace(out, id=cid)
            remap[commit.id] = (cid,)
        else:
            remap[commit.id] = tuple(parents)

    refs: dict[str, str] = {}
    for name, cid in repo.refs.items():
        tips = resolved(cid)
        if tips:
            refs[name] = tips[0]
    pruned = RepoModel(commits=keep, blobs=repo.blobs, refs=refs, head=repo.head)
    # re-restrict blob store to reachable blobs
    used = unique_blobs(pruned)
    pruned.blobs = {bid: b for bid, b in repo.blobs.items() if bid in used}
    return pruned
