"""Corpus-level aggregation: descriptive stats, language shares, funnel.

Percentiles use linear interpolation between closest ranks; the std is
the population standard deviation. Reports are emitted as plot-ready
CSV only — no figure rendering here.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import EmptyInput
from .metadata import MetadataRecord

PERCENTILES = (10, 25, 50, 75, 90, 95)


@dataclass
class SummaryRow:
    metric: str
    sum: float
    mean: float
    std: float
    min: float
    p10: float
    p25: float
    p50: float
    p75: float
    p90: float
    p95: float
    max: float


def percentile(sorted_values: Sequence[float], q: float) -> float:
    """Linear interpolation between closest ranks on presorted values."""
    if not sorted_values:
        raise EmptyInput("percentile of empty sequence")
    rank = (len(sorted_values) - 1) * q / 100.0
    lo = math.floor(rank)
    hi = math.ceil(rank)
    if lo == hi:
        return float(sorted_values[lo])
    # a + (b-a)*f is exact when a == b, keeping percentiles within [min, max]
    return sorted_values[lo] + (sorted_values[hi] - sorted_values[lo]) * (rank - lo)


def summarize(
    records: Iterable, selector: Callable[[object], float], metric: str = ""
) -> SummaryRow:
    values = sorted(float(selector(r)) for r in records)
    if not values:
        raise EmptyInput("summarize needs at least one record")
    n = len(values)
    total = sum(values)
    mean = total / n
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / n)
    p = {q: percentile(values, q) for q in PERCENTILES}
    return SummaryRow(
        metric=metric, sum=total, mean=mean, std=std,
        min=values[0], p10=p[10], p25=p[25], p50=p[50],
        p75=p[75], p90=p[90], p95=p[95], max=values[-1],
    )


@dataclass
class LanguageRow:
    language: str
    loc_share_pct: float
    total_loc: int
    repo_count: int


def language_table(records: Iterable[MetadataRecord]) -> list[LanguageRow]:
    totals: dict[str, float] = {}
    counts: dict[str, int] = {}
    for record in records:
        for language, share in record.languages.items():
            if share <= 0:
                continue
            totals[language] = totals.get(language, 0.0) + share * record.loc
            counts[language] = counts.get(language, 0) + 1
    grand = sum(totals.values())
    rows = [
        LanguageRow(
            language=lang,
            loc_share_pct=round(100.0 * totals[lang] / grand, 2) if grand else 0.0,
            total_loc=round(totals[lang]),
            repo_count=counts[lang],
        )
        for lang in totals
    ]
    rows.sort(key=lambda r: (-r.loc_share_pct, -r.total_loc, r.language))
    return rows


@dataclass
class FunnelRow:
    status: str
    count: int
    pct: float


def funnel(statuses: Iterable[str]) -> list[FunnelRow]:
    counts: dict[str, int] = {}
    for status in statuses:
        counts[status] = counts.get(status, 0) + 1
    total = sum(counts.values())
    return [
        FunnelRow(status=s, count=c, pct=round(100.0 * c / total, 1))
        for s, c in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    ]


def audit_sample(record_ids: Sequence[str], fraction: float, seed: int) -> list[str]:
    """Reproducible random subset of round(fraction * n) ids."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    ordered = sorted(record_ids)
    size = round(fraction * len(ordered))
    rng = random.Random(seed)
    return sorted(rng.sample(ordered, size))


def write_summary_csv(rows: Iterable[SummaryRow], path: str | Path) -> None:
    names = ["metric", "sum", "mean", "std", "min", "p10", "p25", "p50", "p75", "p90", "p95", "max"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in rows:
            writer.writerow([getattr(row, n) for n in names])


def write_language_csv(rows: Iterable[LanguageRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["language", "loc_share_pct", "total_loc", "repo_count"])
        for row in rows:
            writer.writerow([row.language, row.loc_share_pct, row.total_loc, row.repo_count])


def write_funnel_csv(rows: Iterable[FunnelRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["status", "count", "pct"])
        for row in rows:
            writer.writerow([row.status, row.count, row.pct])
