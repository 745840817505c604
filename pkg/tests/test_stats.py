from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scrub.errors import EmptyInput
from scrub.metadata import RepoSizes, extract
from scrub.stats import audit_sample, funnel, language_table, percentile, summarize

from test_metadata import fixture_repo


def brute_force_percentile(values, q):
    """Independent sort-and-interpolate reference."""
    v = sorted(values)
    if len(v) == 1:
        return float(v[0])
    rank = q / 100 * (len(v) - 1)
    lo, hi = int(math.floor(rank)), int(math.ceil(rank))
    return v[lo] + (v[hi] - v[lo]) * (rank - lo)


class TestSummarize:
    def test_one_through_ten(self):
        row = summarize(range(1, 11), lambda v: v, metric="x")
        assert row.p50 == pytest.approx(5.5)
        assert row.min == 1
        assert row.max == 10
        assert row.sum == 55

    def test_single_value(self):
        row = summarize([7.5], lambda v: v)
        assert row.min == row.max == row.mean == row.p10 == row.p95 == 7.5
        assert row.sum == 7.5
        assert row.std == 0.0

    def test_random_vectors_match_oracle(self):
        rng = random.Random(5)
        for _ in range(10):
            values = [rng.uniform(-1000, 1000) for _ in range(200)]
            row = summarize(values, lambda v: v)
            for q, got in ((10, row.p10), (25, row.p25), (50, row.p50),
                           (75, row.p75), (90, row.p90), (95, row.p95)):
                assert abs(got - brute_force_percentile(values, q)) < 1e-9
            mean = sum(values) / len(values)
            std = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
            assert abs(row.std - std) < 1e-9

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            summarize([], lambda v: v)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
    def test_percentile_monotonicity(self, values):
        row = summarize(values, lambda v: v)
        chain = [row.min, row.p10, row.p25, row.p50, row.p75, row.p90, row.p95, row.max]
        assert chain == sorted(chain)

    @settings(max_examples=50, deadline=None)
    @given(st.permutations(list(range(12))))
    def test_permutation_invariance(self, values):
        base = summarize(range(12), lambda v: v)
        assert summarize(values, lambda v: v) == base


class TestLanguageTable:
    def _record(self, languages, loc):
        record = extract(fixture_repo(), "f")
        record.languages = languages
        record.loc = loc
        return record

    def test_two_single_language_repos(self):
        rows = language_table(
            [self._record({"L1": 1.0}, 100), self._record({"L2": 1.0}, 300)]
        )
        assert [(r.language, r.loc_share_pct) for r in rows] == [("L2", 75.0), ("L1", 25.0)]
        assert [r.total_loc for r in rows] == [300, 100]
        assert all(r.repo_count == 1 for r in rows)

    def test_absent_language_no_row(self):
        rows = language_table([self._record({"Only": 1.0}, 10)])
        assert [r.language for r in rows] == ["Only"]

    def test_shares_sum_to_hundred(self):
        rng = random.Random(2)
        records = []
        for _ in range(12):
            split = rng.uniform(0.1, 0.9)
            records.append(
                self._record({"A": split, "B": 1 - split}, rng.randint(100, 10000))
            )
        rows = language_table(records)
        assert sum(r.loc_share_pct for r in rows) == pytest.approx(100.0, abs=0.1)


class TestFunnel:
    def test_acceptance_rate_arithmetic(self):
        statuses = ["accepted"] * 2545 + ["rejected"] * 1837 + ["indeterminate"] * 66 + ["under_review"]
        assert len(statuses) == 4449
        rows = {r.status: r for r in funnel(statuses)}
        assert rows["accepted"].count == 2545
        assert rows["accepted"].pct == 57.2
        assert rows["rejected"].pct == 41.3
        assert rows["indeterminate"].pct == 1.5
        assert rows["under_review"].pct == 0.0

    def test_all_accepted(self):
        rows = funnel(["accepted", "accepted"])
        assert rows[0].pct == 100.0

    def test_empty(self):
        assert funnel([]) == []

    def test_percentages_sum_near_hundred(self):
        rng = random.Random(9)
        statuses = [rng.choice("abcde") for _ in range(997)]
        total = sum(r.pct for r in funnel(statuses))
        assert abs(total - 100.0) <= 0.2


class TestAuditSample:
    def test_full_fraction(self):
        ids = [f"id{i}" for i in range(10)]
        assert audit_sample(ids, 1.0, seed=1) == sorted(ids)

    def test_zero_fraction(self):
        assert audit_sample(["a", "b"], 0.0, seed=1) == []

    def test_sixty_percent_of_hundred(self):
        ids = [f"r{i:03d}" for i in range(100)]
        sample = audit_sample(ids, 0.6, seed=42)
        assert len(sample) == 60
        assert audit_sample(ids, 0.6, seed=42) == sample
        assert audit_sample(list(reversed(ids)), 0.6, seed=42) == sample
        assert audit_sample(ids, 0.6, seed=43) != sample

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            audit_sample(["a"], 1.5, seed=0)
