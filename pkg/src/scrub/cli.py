"""Command-line entry point.

Subcommands mirror the pipeline stages (ingest, meta, select, sanitize,
gate, report) plus ``curate``, which chains them end to end for one
repository. stdout carries only the machine-readable decision/report
JSON; all logging goes to stderr.

Exit codes: 0 success/gate pass, 1 gate fail, 2 usage error,
3 environment error, 4 repository rejected by the selection filter.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .detect import Detector
from .errors import PostScanResidual, ScrubError
from .git_backend import load_repository, write_bundle
from .ingest import Channel, ingest_archive, ingest_bundle, ingest_remote
from .mask import Salt
from .metadata import (
    MetadataRecord,
    RepoSizes,
    extract,
    read_csv,
    select as select_record,
    write_csv,
    write_json,
)
from .pipeline import GateReport, PipelineConfig, gate_check, run_pipeline
from .repo_model import RepoModel
from .stats import (
    FunnelRow,
    funnel,
    language_table,
    summarize,
    write_funnel_csv,
    write_language_csv,
    write_summary_csv,
)

log = logging.getLogger("scrub")

EXIT_OK = 0
EXIT_GATE_FAIL = 1
EXIT_USAGE = 2
EXIT_ENVIRONMENT = 3
EXIT_REJECTED = 4


@dataclass
class RunLog:
    stages: list[dict] = field(default_factory=list)
    detector_hits: dict = field(default_factory=dict)
    skipped_detectors: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)

    def stage(self, name: str, seconds: float) -> None:
        self.stages.append({"stage": name, "seconds": round(seconds, 3)})

    def emit(self) -> None:
        log.info("run log: %s", json.dumps(self.__dict__, default=str))


def _load_salt(args) -> Salt:
    if getattr(args, "salt_file", None):
        return Salt.from_file(args.salt_file)
    env = os.environ.get("SCRUB_SALT")
    if env:
        return Salt.from_text(env)
    raise ScrubError("no salt: set SCRUB_SALT or pass --salt-file")


def _load_config(args) -> PipelineConfig:
    salt = _load_salt(args)
    if getattr(args, "config", None):
        config = PipelineConfig.from_file(args.config, salt)
    else:
        config = PipelineConfig(salt=salt)
    if getattr(args, "require_ner", False):
        config.require_ner = True
    if getattr(args, "strict_paper_patterns", False):
        config.strict_paper_patterns = True
    if getattr(args, "aggressive_urls", False):
        config.aggressive_urls = True
    ner_url = os.environ.get("SCRUB_NER_URL")
    if ner_url and config.ner.mode == "disabled":
        config.ner.mode = "http"
        config.ner.url = ner_url
    return config


def _sizes_for(repo: RepoModel, bundle_path: Path | None) -> RepoSizes:
    history_bytes = sum(len(b.data) for b in repo.blobs.values())
    head = repo.head_commit()
    worktree_bytes = sum(len(repo.blobs[bid].data) for bid in head.tree.values())
    bundle_bytes = bundle_path.stat().st_size if bundle_path and bundle_path.exists() else 0
    mb = 2**20
    return RepoSizes(
        git_history_mb=round(history_bytes / mb, 2),
        bundle_mb=round(bundle_bytes / mb, 2),
        worktree_mb=round(worktree_bytes / mb, 2),
    )


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _write_manifests(result_manifest, out_bundle: Path) -> list[str]:
    internal = out_bundle.with_name(out_bundle.stem + ".manifest.jsonl")
    public = out_bundle.with_name(out_bundle.stem + ".manifest.public.jsonl")
    result_manifest.write_jsonl(internal, redacted=False)
    result_manifest.write_jsonl(public, redacted=True)
    return [str(internal), str(public)]


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    out = Path(args.out)
    if args.channel == "archive":
        repo, report = ingest_archive(args.source, threshold_mb=args.threshold_mb)
        write_bundle(repo, out)
        report.bundle_path = out
    elif args.channel == "remote":
        repo, report = ingest_remote(args.source, out.parent or Path("."))
        if report.bundle_path != out:
            Path(report.bundle_path).replace(out)
            report.bundle_path = out
    else:
        repo, report = ingest_bundle(args.source)
        write_bundle(repo, out)
        report.bundle_path = out
    if args.ok_file:
        with open(args.ok_file, "a", encoding="utf-8") as fh:
            fh.write(str(args.source) + "\n")
    _emit(
        {
            "channel": report.channel.value,
            "slug": report.slug,
            "bundle": str(report.bundle_path),
            "synthetic": report.synthetic,
            "large_files": [{"path": p, "size_mb": s} for p, s in report.large_files],
            "refs": len(repo.refs),
            "commits": len(repo.commits),
        }
    )
    return EXIT_OK


def _extract_record(args) -> MetadataRecord:
    src = Path(args.source)
    repo = load_repository(src)
    name = args.name or (src.stem if src.is_file() else src.name)
    bundle_path = src if src.is_file() and src.suffix != ".json" else None
    return extract(repo, repo_name=name, sizes=_sizes_for(repo, bundle_path))


def cmd_meta(args) -> int:
    record = _extract_record(args)
    write_csv([record], args.csv)
    if args.json:
        write_json(record, args.json)
    _emit({"repo_name": record.repo_name, "loc": record.loc, "csv": str(args.csv)})
    return EXIT_OK


def cmd_select(args) -> int:
    records = read_csv(args.csv)
    decisions = [select_record(r) for r in records]
    payload = [
        {"repo_name": r.repo_name, "accepted": d.accepted, "reason": d.reason.value}
        for r, d in zip(records, decisions)
    ]
    _emit(payload[0] if len(payload) == 1 else {"decisions": payload})
    return EXIT_OK if all(d.accepted for d in decisions) else EXIT_GATE_FAIL


def _gate_exit(gate: GateReport, config: PipelineConfig) -> int:
    if gate.passed:
        return EXIT_OK
    fatal_less = not gate.residual and not gate.deny_glob_paths
    if config.require_ner and Detector.NER in gate.skipped_detectors and fatal_less:
        return EXIT_ENVIRONMENT
    return EXIT_GATE_FAIL


def cmd_sanitize(args) -> int:
    config = _load_config(args)
    repo = load_repository(args.infile)
    result = run_pipeline(repo, config)
    out = Path(args.out)
    if result.gate.passed:
        write_bundle(result.repo, out)
        outputs = [str(out)] + _write_manifests(result.manifest, out)
    else:
        quarantine = Path(args.quarantine or out.parent / "quarantine")
        quarantine.mkdir(parents=True, exist_ok=True)
        qpath = quarantine / out.name
        write_bundle(result.repo, qpath)
        outputs = [str(qpath)] + _write_manifests(result.manifest, qpath)
        log.warning("gate failed; sanitized bundle quarantined at %s", qpath)
    _emit({"gate": result.gate.to_dict(), "outputs": outputs})
    return _gate_exit(result.gate, config)


def cmd_gate(args) -> int:
    config = _load_config(args)
    repo = load_repository(args.infile)
    gate = gate_check(repo, config)
    _emit(gate.to_dict())
    return _gate_exit(gate, config)


def cmd_report(args) -> int:
    csv_dir = Path(args.csv_dir)
    records = []
    for path in sorted(csv_dir.glob("*.csv")):
        try:
            records.extend(read_csv(path))
        except (KeyError, ValueError):
            log.warning("skipping %s: not a metadata CSV", path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if records:
        metrics = [
            ("loc", lambda r: r.loc),
            ("raw_loc", lambda r: r.raw_loc),
            ("commit_count", lambda r: r.commit_count),
            ("files", lambda r: r.files),
            ("contributors_count", lambda r: r.contributors_count),
            ("duplication_ratio", lambda r: r.duplication_ratio),
            ("docstring_ratio", lambda r: r.docstring_ratio),
            ("avg_func_length", lambda r: r.avg_func_length),
        ]
        rows = [summarize(records, sel, metric=name) for name, sel in metrics]
        write_summary_csv(rows, out / "summary.csv")
        write_language_csv(language_table(records), out / "languages.csv")
    statuses = []
    for path in sorted(csv_dir.glob("*.decision.json")):
        doc = json.loads(path.read_text("utf-8"))
        statuses.append("accepted" if doc.get("accepted") else doc.get("reason", "rejected"))
    write_funnel_csv(funnel(statuses) if statuses else [], out / "funnel.csv")
    _emit({"records": len(records), "statuses": len(statuses), "out": str(out)})
    return EXIT_OK


def cmd_curate(args) -> int:
    runlog = RunLog()
    config = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    t0 = time.monotonic()
    src = Path(args.source)
    if args.channel == "archive":
        repo, report = ingest_archive(args.source)
        name = args.name or report.slug
        bundle_path = None
    elif args.channel == "remote":
        repo, report = ingest_remote(args.source, out_dir)
        name = args.name or report.slug
        bundle_path = report.bundle_path
    else:
        repo, report = ingest_bundle(args.source)
        name = args.name or src.stem
        bundle_path = src
    runlog.stage("ingest", time.monotonic() - t0)

    t0 = time.monotonic()
    record = extract(repo, repo_name=name, sizes=_sizes_for(repo, bundle_path))
    write_csv([record], out_dir / f"{name}.metadata.csv")
    runlog.stage("meta", time.monotonic() - t0)

    t0 = time.monotonic()
    decision = select_record(record)
    decision_payload = {
        "repo_name": name,
        "accepted": decision.accepted,
        "reason": decision.reason.value,
        "loc": record.loc,
    }
    (out_dir / f"{name}.decision.json").write_text(
        json.dumps(decision_payload, indent=2) + "\n", "utf-8"
    )
    runlog.stage("select", time.monotonic() - t0)
    if not decision.accepted:
        runlog.emit()
        _emit({"decision": decision_payload})
        return EXIT_REJECTED

    t0 = time.monotonic()
    result = run_pipeline(repo, config)
    runlog.stage("sanitize", time.monotonic() - t0)
    for entry in result.manifest.sorted_entries():
        key = entry.category.value
        runlog.detector_hits[key] = runlog.detector_hits.get(key, 0) + entry.occurrences
    runlog.skipped_detectors = sorted(d.value for d in result.gate.skipped_detectors)

    t0 = time.monotonic()
    out_bundle = out_dir / f"{name}.bundle"
    if result.gate.passed:
        write_bundle(result.repo, out_bundle)
        outputs = [str(out_bundle)] + _write_manifests(result.manifest, out_bundle)
    else:
        quarantine = Path(args.quarantine or out_dir / "quarantine")
        quarantine.mkdir(parents=True, exist_ok=True)
        qpath = quarantine / out_bundle.name
        write_bundle(result.repo, qpath)
        outputs = [str(qpath)] + _write_manifests(result.manifest, qpath)
    runlog.stage("gate", time.monotonic() - t0)
    runlog.outputs = outputs
    runlog.emit()

    _emit({"decision": decision_payload, "gate": result.gate.to_dict(), "outputs": outputs})
    return _gate_exit(result.gate, config)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scrub", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="materialize a submission into a bundle")
    p.add_argument("--channel", choices=["bundle", "archive", "remote"], required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold-mb", type=float, default=95)
    p.add_argument("--ok-file")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("meta", help="extract the metadata record")
    p.add_argument("--in", dest="source", required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--json")
    p.add_argument("--name")
    p.set_defaults(func=cmd_meta)

    p = sub.add_parser("select", help="apply the automated selection filter")
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_select)

    for cmd, fn in (("sanitize", cmd_sanitize), ("gate", cmd_gate)):
        p = sub.add_parser(cmd)
        p.add_argument("--in", dest="infile", required=True)
        if cmd == "sanitize":
            p.add_argument("--out", required=True)
            p.add_argument("--quarantine")
        p.add_argument("--config")
        p.add_argument("--salt-file")
        p.add_argument("--require-ner", action="store_true")
        p.add_argument("--strict-paper-patterns", action="store_true")
        p.add_argument("--aggressive-urls", action="store_true")
        p.set_defaults(func=fn)

    p = sub.add_parser("report", help="aggregate metadata CSVs into report tables")
    p.add_argument("--csv-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("curate", help="ingest -> meta -> select -> sanitize -> gate")
    p.add_argument("--channel", choices=["bundle", "archive", "remote"], default="bundle")
    p.add_argument("--source", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--name")
    p.add_argument("--config")
    p.add_argument("--salt-file")
    p.add_argument("--quarantine")
    p.add_argument("--require-ner", action="store_true")
    p.add_argument("--strict-paper-patterns", action="store_true")
    p.add_argument("--aggressive-urls", action="store_true")
    p.set_defaults(func=cmd_curate)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=os.environ.get("SCRUB_LOG", "INFO"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PostScanResidual as exc:
        # residual findings are a gate-class failure, not an environment one
        log.error("%s: %s", exc.code, exc)
        return EXIT_GATE_FAIL
    except ScrubError as exc:
        log.error("%s: %s", exc.code, exc)
        return EXIT_ENVIRONMENT
    except FileNotFoundError as exc:
        log.error("missing file: %s", exc)
        return EXIT_ENVIRONMENT


if __name__ == "__main__":
    sys.exit(main())
