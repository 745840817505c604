"""Three-phase sanitization over a repository model.

Phase 1 scans the working tree with every enabled detector (code files
confined to lexical zones) and folds the replacements into the blob
store. Phase 2 rewrites history: commit identities and messages get the
full detector set, unique text blobs get the regex/dictionary/endpoint
subset only — per-blob model inference and subprocess secret scanning
across an entire object store is deliberately out of budget, which is
the documented residual-risk trade-off. Phase 3 re-scans everything and
renders a hard pass/fail verdict.

Every scan is filtered through mask-artifact suppression, so running
the pipeline on its own output is the identity.
"""

from __future__ import annotations

import fnmatch
import json
import logging
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

from .detect import (
    Category,
    Detector,
    Dictionary,
    Finding,
    Locator,
    PatternRule,
    Severity,
    Surface,
    build_dictionary_automaton,
    canonical_order,
    detect_dictionary,
    detect_endpoints,
    detect_ner,
    detect_regex_pii,
    detect_secrets,
    filter_mask_artifacts,
    is_mask_artifact,
    load_dictionaries,
    load_rules,
)
from .errors import NerUnavailable, PostScanResidual
from .mask import RedactionManifest, Salt, apply_replacements, mask_for, resolve_overlaps
from .ner_client import NerConfig, make_client
from .repo_model import RepoModel, RewriteCallbacks, blob_id_for, rewrite_history, unique_blobs
from .zones import FileClass, LangMap, classify_file, default_lang_map, extract_zones

log = logging.getLogger(__name__)

DEFAULT_DENY_GLOBS = ["*.pem", "*.p12", "*.key", "id_rsa*", ".env", "*.keystore"]

# package-manager manifests where raw URLs are load-bearing
LOCKFILE_NAMES = {
    "package.json", "package-lock.json", "yarn.lock", "pnpm-lock.yaml",
    "composer.json", "composer.lock", "cargo.toml", "cargo.lock",
    "pipfile.lock", "poetry.lock", "go.mod", "go.sum", "gemfile.lock",
}

HISTORY_BLOB_DETECTORS = {Detector.REGEX_PII, Detector.DICTIONARY, Detector.ENDPOINT}


@dataclass
class PipelineConfig:
    salt: Salt
    detectors: set[Detector] = dc_field(default_factory=lambda: set(Detector))
    deny_globs: list[str] = dc_field(default_factory=lambda: list(DEFAULT_DENY_GLOBS))
    rules: list[PatternRule] = dc_field(default_factory=list)
    dictionaries: list[Dictionary] = dc_field(default_factory=list)
    partner_domains: list[str] = dc_field(default_factory=list)
    ner: NerConfig = dc_field(default_factory=NerConfig)
    lang_map: Optional[LangMap] = None
    strict_paper_patterns: bool = False
    aggressive_urls: bool = False
    require_ner: bool = False
    prune_empty_commits: bool = False

    def __post_init__(self):
        if self.lang_map is None:
            self.lang_map = default_lang_map()
        # the domains dictionary doubles as the partner domain-suffix list
        for dictionary in self.dictionaries:
            if dictionary.name == "domains":
                for term in dictionary.terms:
                    if term not in self.partner_domains:
                        self.partner_domains.append(term)

    @classmethod
    def from_file(cls, path: str | Path, salt: Salt) -> "PipelineConfig":
        raw = json.loads(Path(path).read_text("utf-8"))
        base = Path(path).parent

        def resolve(p: str) -> str:
            q = Path(p)
            return str(q if q.is_absolute() else base / q)

        detectors = {Detector(d) for d in raw.get("detectors", [d.value for d in Detector])}
        rules = load_rules(resolve(raw["rules_file"])) if raw.get("rules_file") else []
        dictionaries = (
            load_dictionaries(resolve(raw["dictionaries_dir"]))
            if raw.get("dictionaries_dir")
            else []
        )
        lang_map = LangMap.load(resolve(raw["lang_map"])) if raw.get("lang_map") else None
        return cls(
            salt=salt,
            detectors=detectors,
            deny_globs=list(raw.get("deny_globs", DEFAULT_DENY_GLOBS)),
            rules=rules,
            dictionaries=dictionaries,
            partner_domains=list(raw.get("partner_domains", [])),
            ner=NerConfig.from_dict(raw.get("ner", {})),
            lang_map=lang_map,
            strict_paper_patterns=bool(raw.get("strict_paper_patterns", False)),
            aggressive_urls=bool(raw.get("aggressive_urls", False)),
            require_ner=bool(raw.get("require_ner", False)),
            prune_empty_commits=bool(raw.get("prune_empty_commits", False)),
        )


class Scanner:
    """Compiled detector bundle; stateless after construction."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.automaton = build_dictionary_automaton(config.dictionaries)
        self.ner_client = make_client(config.ner) if Detector.NER in config.detectors else None
        self.skipped: set[Detector] = set()
        if Detector.NER in config.detectors and self.ner_client is None:
            self.skipped.add(Detector.NER)

    def scan_text(
        self, text: bytes, locator: Locator, detectors: set[Detector]
    ) -> list[Finding]:
        enabled = detectors & self.config.detectors
        findings: list[Finding] = []
        if Detector.SECRETS in enabled:
            findings += detect_secrets(text, locator, self.config.rules)
        if Detector.REGEX_PII in enabled:
            findings += detect_regex_pii(
                text, locator, self.config.rules,
                strict_paper_patterns=self.config.strict_paper_patterns,
            )
        if Detector.ENDPOINT in enabled:
            findings += detect_endpoints(text, locator, self.config.partner_domains)
        if Detector.DICTIONARY in enabled and self.config.dictionaries:
            findings += detect_dictionary(text, locator, self.automaton)
        if Detector.NER in enabled and self.ner_client is not None:
            try:
                findings += detect_ner(
                    text, locator, self.ner_client,
                    min_score=self.config.ner.min_score,
                    chunk_size=self.config.ner.chunk_size,
                    overlap=self.config.ner.overlap,
                )
            except NerUnavailable as exc:
                log.warning("NER detector skipped: %s", exc)
                self.skipped.add(Detector.NER)
        return filter_mask_artifacts(text, findings)

    def scan_file(self, path: str, data: bytes, locator: Locator) -> list[Finding]:
        """Full-content scan for CONFIG/DOC, zone-interior scan for CODE."""
        file_class = classify_file(path, data, self.config.lang_map)
        if file_class is FileClass.BINARY:
            return []
        if file_class is not FileClass.CODE:
            findings = self.scan_text(data, locator, self.config.detectors)
            if not self.config.aggressive_urls:
                name = path.rsplit("/", 1)[-1].lower()
                if file_class is FileClass.CONFIG and name in LOCKFILE_NAMES:
                    findings = [f for f in findings if f.category is not Category.URL]
            return findings
        language = self.config.lang_map.language_of(path) or ""
        try:
            zones = extract_zones(data, language, self.config.lang_map)
        except Exception:
            log.info("no lexer for %s (%s); file left unscanned", path, language)
            return []
        findings: list[Finding] = []
        for zone in zones:
            if zone.scan_end <= zone.scan_start:
                continue
            piece = data[zone.scan_start : zone.scan_end]
            for f in self.scan_text(piece, locator, self.config.detectors):
                findings.append(
                    Finding(
                        detector=f.detector, category=f.category, severity=f.severity,
                        locator=locator, start=f.start + zone.scan_start,
                        end=f.end + zone.scan_start, matched=f.matched, label=f.label,
                    )
                )
        return filter_mask_artifacts(data, findings)


def _path_matches(path: str, patterns: list[str]) -> bool:
    name = path.rsplit("/", 1)[-1]
    for pattern in patterns:
        target = path if "/" in pattern else name
        if fnmatch.fnmatch(target, pattern):
            return True
    return False


def scan_working_tree(repo: RepoModel, config: PipelineConfig,
                      scanner: Scanner | None = None) -> list[Finding]:
    """Scan every text file at head; mask artifacts filtered, overlapping
    detector hits resolved (a private IP is one finding, not IPV4 + PRIVATE_IP)."""
    scanner = scanner or Scanner(config)
    findings: list[Finding] = []
    head = repo.head_commit()
    for path in sorted(head.tree):
        blob = repo.blobs[head.tree[path]]
        locator = Locator(surface=Surface.WORKING_TREE, path=path)
        findings += scanner.scan_file(path, blob.data, locator)
    return resolve_overlaps(canonical_order(findings))


def _blob_plan_from_findings(
    repo: RepoModel,
    per_path: dict[str, list[Finding]],
    path_blob: dict[str, str],
    salt: Salt,
    manifest: RedactionManifest,
) -> dict[str, bytes]:
    """Per-blob replacement plan; first path (sorted) wins for shared blobs."""
    plan: dict[str, bytes] = {}
    claimed: dict[str, str] = {}
    for path in sorted(per_path):
        bid = path_blob[path]
        if bid in claimed:
            log.info("blob %s shared by %s and %s; using %s", bid[:8], claimed[bid], path, claimed[bid])
            continue
        claimed[bid] = path
        findings = resolve_overlaps(per_path[path])
        if not findings:
            continue
        new_data, _ = apply_replacements(repo.blobs[bid].data, findings, salt, manifest)
        plan[bid] = new_data
    return plan


def sanitize_working_tree(
    repo: RepoModel, config: PipelineConfig, scanner: Scanner | None = None
) -> tuple[RepoModel, RedactionManifest]:
    """Phase 1: scan head files, replace, verify nothing is left."""
    scanner = scanner or Scanner(config)
    manifest = RedactionManifest(config.salt)
    head = repo.head_commit()
    per_path: dict[str, list[Finding]] = {}
    for path in sorted(head.tree):
        blob = repo.blobs[head.tree[path]]
        locator = Locator(surface=Surface.WORKING_TREE, path=path)
        found = scanner.scan_file(path, blob.data, locator)
        if found:
            per_path[path] = found

    plan = _blob_plan_from_findings(repo, per_path, dict(head.tree), config.salt, manifest)
    if plan:
        # key by content digest: loaded models may use native (git) blob ids
        keyed = {blob_id_for(repo.blobs[bid].data): nd for bid, nd in plan.items()}

        def blob_cb(data: bytes) -> bytes:
            return keyed.get(blob_id_for(data), data)

        repo = rewrite_history(repo, RewriteCallbacks(blob_cb=blob_cb))

    residual = scan_working_tree(repo, config, scanner)
    if residual:
        raise PostScanResidual(
            f"{len(residual)} finding(s) survive working-tree sanitization: "
            + "; ".join(f"{f.category.value}:{f.matched!r}" for f in residual[:5])
        )
    return repo, manifest


def _identity_maps(
    repo: RepoModel, salt: Salt, manifest: RedactionManifest
) -> tuple[dict[str, str], dict[str, str]]:
    names: dict[str, str] = {}
    emails: dict[str, str] = {}
    for commit in sorted(repo.commits.values(), key=lambda c: c.id):
        for name in (commit.author_name, commit.committer_name):
            if name not in names:
                names[name] = name if is_mask_artifact(name) else mask_for(
                    Category.AUTHOR_NAME, name, salt
                )
            if names[name] != name:
                manifest.record(Category.AUTHOR_NAME, name, names[name], Surface.COMMIT_META)
        for email in (commit.author_email, commit.committer_email):
            if email not in emails:
                emails[email] = email if is_mask_artifact(email) else mask_for(
                    Category.AUTHOR_EMAIL, email, salt
                )
            if emails[email] != email:
                manifest.record(Category.AUTHOR_EMAIL, email, emails[email], Surface.COMMIT_META)
    return names, emails


def sanitize_history(
    repo: RepoModel, config: PipelineConfig, scanner: Scanner | None = None
) -> tuple[RepoModel, RedactionManifest]:
    """Phase 2: commit metadata (full detector set) + unique blobs
    (regex/dictionary/endpoint only), one rewrite pass."""
    scanner = scanner or Scanner(config)
    manifest = RedactionManifest(config.salt)

    # pass A: identities and messages
    names, emails = _identity_maps(repo, config.salt, manifest)
    messages: dict[str, str] = {}
    for commit in sorted(repo.commits.values(), key=lambda c: c.id):
        msg = commit.message
        if msg in messages:
            continue
        data = msg.encode("utf-8", "surrogateescape")
        locator = Locator(surface=Surface.COMMIT_META, commit=commit.id, field="message")
        findings = resolve_overlaps(scanner.scan_text(data, locator, set(Detector)))
        if findings:
            new_data, _ = apply_replacements(data, findings, config.salt, manifest)
            messages[msg] = new_data.decode("utf-8", "surrogateescape")
        else:
            messages[msg] = msg

    # pass B: unique text blobs, restricted detector set, full content
    blob_plan: dict[str, bytes] = {}
    for bid in sorted(unique_blobs(repo)):
        blob = repo.blobs[bid]
        if not blob.is_text:
            continue
        locator = Locator(surface=Surface.HISTORY_BLOB, blob=bid)
        findings = resolve_overlaps(
            scanner.scan_text(blob.data, locator, HISTORY_BLOB_DETECTORS)
        )
        if findings:
            new_data, _ = apply_replacements(blob.data, findings, config.salt, manifest)
            blob_plan[blob_id_for(blob.data)] = new_data

    deny = list(config.deny_globs)

    cbs = RewriteCallbacks(
        name_cb=lambda n: names.get(n, n),
        email_cb=lambda e: emails.get(e, e),
        message_cb=lambda m: messages.get(m, m),
        blob_cb=lambda data: blob_plan.get(blob_id_for(data), data),
        filename_cb=lambda path: not _path_matches(path, deny),
    )
    rewritten = rewrite_history(repo, cbs, prune_empty=config.prune_empty_commits)
    return rewritten, manifest


@dataclass
class GateReport:
    residual: list[Finding] = dc_field(default_factory=list)
    skipped_detectors: set[Detector] = dc_field(default_factory=set)
    deny_glob_paths: list[str] = dc_field(default_factory=list)
    passed: bool = True
    exit_code: int = 0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "exit_code": self.exit_code,
            "residual": [f.to_dict() for f in self.residual],
            "skipped_detectors": sorted(d.value for d in self.skipped_detectors),
            "deny_glob_paths": self.deny_glob_paths,
        }


def _fatal(finding: Finding) -> bool:
    return finding.severity in (Severity.CRITICAL, Severity.HIGH)


def gate_check(
    repo: RepoModel, config: PipelineConfig, scanner: Scanner | None = None
) -> GateReport:
    """Phase 3: full re-scan of all three surfaces plus deny-glob audit."""
    scanner = scanner or Scanner(config)
    residual: list[Finding] = []
    if repo.refs:
        residual += scan_working_tree(repo, config, scanner)
        for commit in sorted(repo.commits.values(), key=lambda c: c.id):
            locator = Locator(surface=Surface.COMMIT_META, commit=commit.id, field="message")
            data = commit.message.encode("utf-8", "surrogateescape")
            residual += resolve_overlaps(scanner.scan_text(data, locator, set(Detector)))
            for field_name, value in (
                ("author_name", commit.author_name),
                ("author_email", commit.author_email),
                ("committer_name", commit.committer_name),
                ("committer_email", commit.committer_email),
            ):
                if value and not is_mask_artifact(value):
                    id_loc = Locator(surface=Surface.COMMIT_META, commit=commit.id, field=field_name)
                    vdata = value.encode("utf-8", "surrogateescape")
                    residual += resolve_overlaps(scanner.scan_text(vdata, id_loc, set(Detector)))
        for bid in sorted(unique_blobs(repo)):
            blob = repo.blobs[bid]
            if not blob.is_text:
                continue
            locator = Locator(surface=Surface.HISTORY_BLOB, blob=bid)
            residual += resolve_overlaps(
                scanner.scan_text(blob.data, locator, HISTORY_BLOB_DETECTORS)
            )

    deny_paths: list[str] = []
    for commit in repo.reachable_commits():
        for path in commit.tree:
            if _path_matches(path, config.deny_globs) and path not in deny_paths:
                deny_paths.append(path)

    residual = canonical_order(residual)
    fatal = [f for f in residual if _fatal(f)]
    passed = not fatal and not deny_paths
    if config.require_ner and Detector.NER in scanner.skipped:
        passed = False
    return GateReport(
        residual=residual,
        skipped_detectors=set(scanner.skipped),
        deny_glob_paths=sorted(deny_paths),
        passed=passed,
        exit_code=0 if passed else 1,
    )


@dataclass
class PipelineResult:
    repo: RepoModel
    manifest: RedactionManifest
    gate: GateReport


def run_pipeline(repo: RepoModel, config: PipelineConfig) -> PipelineResult:
    """All three phases in order; the caller decides what to do with a
    failing gate (quarantine vs release)."""
    scanner = Scanner(config)
    repo1, wt_manifest = sanitize_working_tree(repo, config, scanner)
    repo2, history_manifest = sanitize_history(repo1, config, scanner)
    wt_manifest.merge(history_manifest)
    gate = gate_check(repo2, config, scanner)
    return PipelineResult(repo=repo2, manifest=wt_manifest, gate=gate)
