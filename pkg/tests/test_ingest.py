from __future__ import annotations

import pytest

from scrub.errors import EmptyTree, NoRefs
from scrub.ingest import (
    ingest_archive,
    ingest_remote,
    pointer_stub,
    repo_only_name,
    safe_name,
)
from scrub.metadata import history_metrics

from conftest import git


class TestSafeName:
    @pytest.mark.parametrize(
        "url,expected",
        [
            ("https://github.com/org/repo.git", "org--repo"),
            ("git@github.com:org/repo.git", "org--repo"),
            ("https://gitlab.com/group/sub/repo", "group--sub--repo"),
        ],
    )
    def test_documented_pairs(self, url, expected):
        assert safe_name(url) == expected

    def test_fixed_point_on_own_output(self):
        for url in (
            "https://github.com/org/repo.git",
            "https://gitlab.com/group/sub/repo",
            "git@h.example:team/weird name!.git",
        ):
            slug = safe_name(url)
            assert safe_name(slug) == slug

    def test_empty_result_becomes_repo(self):
        assert safe_name("https://host/!!!") == "repo"

    def test_git_atom_suffixes_guarded(self):
        assert safe_name("https://h/o/x.git.git").endswith("-repo")
        assert safe_name("https://h/o/x.atom") == "o--x.atom-repo"

    def test_slug_shape_invariant(self):
        import re

        for url in (
            "https://github.com/org/repo.git",
            "ssh://git@host:1234/team/sub dir/Repo Name!.git",
            "https://gitlab.com/a/b/c/d",
        ):
            slug = safe_name(url)
            assert re.fullmatch(r"[A-Za-z0-9.-]+(--[A-Za-z0-9.-]+)*", slug), slug
            assert not slug[0] in ".-" and not slug[-1] in ".-"


class TestRepoOnlyName:
    @pytest.mark.parametrize(
        "url,expected",
        [
            ("https://github.com/org/repo.git", "repo"),
            ("git@github.com:org/repo.git", "repo"),
            ("https://gitlab.com/group/sub/repo", "repo"),
            ("  https://h/x/weird name!.git ", "weird-name"),
        ],
    )
    def test_documented_pairs(self, url, expected):
        assert repo_only_name(url) == expected


class TestIngestArchive:
    def test_small_tree(self, tmp_path):
        src = tmp_path / "src"
        (src / "sub").mkdir(parents=True)
        (src / "a.py").write_text("x = 1\n")
        (src / "b.py").write_text("y = 2\n")
        (src / "sub" / "c.txt").write_text("notes\n")
        repo, report = ingest_archive(src)
        assert len(repo.commits) == 1
        assert len(repo.refs) == 1
        assert len(repo.blobs) == 3
        assert report.synthetic is True
        assert report.large_files == []

    def test_large_file_gets_pointer(self, tmp_path):
        src = tmp_path / "big"
        src.mkdir()
        (src / "ok.py").write_bytes(b"x = 1\n")
        (src / "huge.bin").write_bytes(bytes(100 * 2**20))  # 100 MiB of zeros
        repo, report = ingest_archive(src, threshold_mb=95)
        assert [p for p, _ in report.large_files] == ["huge.bin"]
        head = repo.head_commit()
        data = repo.blobs[head.tree["huge.bin"]].data
        assert data.startswith(b"scrub-lfs-pointer v1\n")
        assert f"size {100 * 2**20}".encode() in data

    def test_at_threshold_left_byte_identical(self, tmp_path):
        src = tmp_path / "edge"
        src.mkdir()
        payload = bytes(2 * 2**20)  # exactly 2 MiB with threshold 2: not strictly larger
        (src / "edge.bin").write_bytes(payload)
        repo, report = ingest_archive(src, threshold_mb=2)
        head = repo.head_commit()
        assert repo.blobs[head.tree["edge.bin"]].data == payload
        assert report.large_files == []

    def test_empty_dir(self, tmp_path):
        empty = tmp_path / "vacant"
        empty.mkdir()
        with pytest.raises(EmptyTree):
            ingest_archive(empty)

    def test_channel_detectable_in_metadata(self, tmp_path):
        src = tmp_path / "tree"
        src.mkdir()
        (src / "f.py").write_text("a = 1\n")
        repo, _ = ingest_archive(src)
        history = history_metrics(repo)
        assert history.commit_count == 1
        assert history.branch_count == 1

    def test_pointer_format(self):
        stub = pointer_stub(12345, "ab" * 32)
        assert stub == b"scrub-lfs-pointer v1\nsize 12345\nsha256 " + b"ab" * 32 + b"\n"


class TestIngestRemote:
    def test_local_filesystem_remote(self, git_fixture_repo, tmp_path):
        repo, report = ingest_remote(str(git_fixture_repo), tmp_path / "work")
        branches = [r for r in repo.refs if r.startswith("refs/heads/")]
        assert sorted(branches) == ["refs/heads/feature", "refs/heads/main"]
        assert repo.head == "refs/heads/main"  # remote's default branch
        assert report.bundle_path is not None and report.bundle_path.exists()

    def test_empty_remote_raises_no_refs(self, tmp_path):
        bare = tmp_path / "empty.git"
        git(["init", "-q", "--bare", str(bare)])
        with pytest.raises(NoRefs):
            ingest_remote(str(bare), tmp_path / "work")

    def test_missing_head_symref_falls_back_to_first_branch(self, tmp_path):
        # default branch pointer left at an unborn branch; real branch is zeta->alpha
        src = tmp_path / "src"
        src.mkdir()
        env = ["-c", "user.name=T", "-c", "user.email=t@example.org",
               "-c", "init.defaultBranch=unborn"]
        git([*env, "init", "-q"], cwd=src)
        (src / "f.txt").write_text("x\n")
        git([*env, "add", "."], cwd=src)
        git([*env, "commit", "-q", "-m", "c"], cwd=src)  # lands on 'unborn'
        git([*env, "branch", "zeta"], cwd=src)
        git([*env, "branch", "alpha"], cwd=src)
        git([*env, "checkout", "-q", "alpha"], cwd=src)
        git([*env, "branch", "-D", "unborn"], cwd=src)
        git([*env, "symbolic-ref", "HEAD", "refs/heads/gone"], cwd=src)
        repo, _ = ingest_remote(str(src), tmp_path / "work")
        assert repo.head == "refs/heads/alpha"  # lexicographically first branch
