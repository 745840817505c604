from __future__ import annotations

import subprocess

import pytest

from scrub.detect import Dictionary
from scrub.mask import Salt
from scrub.ner_client import NerConfig
from scrub.pipeline import PipelineConfig
from scrub.repo_model import RepoBuilder


@pytest.fixture
def salt() -> Salt:
    return Salt.from_text("test-salt")


@pytest.fixture
def builder() -> RepoBuilder:
    return RepoBuilder()


@pytest.fixture
def base_config(salt) -> PipelineConfig:
    return PipelineConfig(
        salt=salt,
        dictionaries=[Dictionary("codenames", ["nightjar", "ferrous"])],
        ner=NerConfig(mode="gazetteer", gazetteer=["Alice Zhang", {"name": "Acme Corp", "label": "ORG"}]),
    )


def git(args: list[str], cwd=None, input_bytes: bytes | None = None) -> str:
    """Direct git invocations for building oracle fixtures in tests."""
    proc = subprocess.run(
        ["git", *args], cwd=cwd, input=input_bytes, capture_output=True, check=True
    )
    return proc.stdout.decode()


@pytest.fixture
def git_fixture_repo(tmp_path):
    """Real git repository with 2 branches / 5 commits, built by the tool
    itself so tests can count commits with `git log` as the oracle."""
    repo = tmp_path / "fixture"
    repo.mkdir()
    env_args = [
        "-c", "user.name=Fix Ture", "-c", "user.email=fix@example.org",
        "-c", "init.defaultBranch=main",
    ]
    git([*env_args, "init", "-q"], cwd=repo)
    for i in range(3):
        (repo / "a.txt").write_text(f"line {i}\n")
        git([*env_args, "add", "."], cwd=repo)
        git([*env_args, "commit", "-q", "-m", f"main {i}", "--date=2021-01-0%d 10:00" % (i + 1)], cwd=repo)
    git([*env_args, "checkout", "-q", "-b", "feature"], cwd=repo)
    for i in range(2):
        (repo / "b.txt").write_text(f"feature {i}\n")
        git([*env_args, "add", "."], cwd=repo)
        git([*env_args, "commit", "-q", "-m", f"feature {i}"], cwd=repo)
    git([*env_args, "checkout", "-q", "main"], cwd=repo)
    return repo
