from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icat.scoring import (
    QueryReport,
    ScoreError,
    ScorePair,
    aggregate,
    coverage_score,
    factuality_score,
    icat_beta,
)

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
# Realistic scores are ratios of small integer counts: exactly zero or not
# astronomically tiny. Products of two free-range floats can underflow to 0,
# which no float implementation of the formula can distinguish from true zero.
realistic_unit = st.one_of(
    st.just(0.0), st.floats(min_value=1e-9, max_value=1.0, allow_nan=False)
)
positive_unit = st.floats(min_value=1e-3, max_value=1.0, allow_nan=False)
betas = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


def make_report(query_id, s_fact_counts, covered, aspects_total, beta=1.0, variant="S"):
    total, grounded = s_fact_counts
    return QueryReport.build(
        query_id=query_id,
        variant=variant,
        claims_total=total,
        claims_grounded=grounded,
        aspects_total=aspects_total,
        aspects_covered=covered,
        beta=beta,
    )


class TestFactualityScore:
    def test_ratio(self):
        assert factuality_score(4, 3) == 0.75

    def test_all_grounded(self):
        assert factuality_score(10, 10) == 1.0

    def test_empty_response_convention(self):
        assert factuality_score(0, 0) == 0.0

    def test_grounded_exceeding_total_rejected(self):
        with pytest.raises(ScoreError):
            factuality_score(2, 3)

    def test_negative_rejected(self):
        with pytest.raises(ScoreError):
            factuality_score(-1, 0)


class TestCoverageScore:
    def test_partial(self):
        assert coverage_score({"a", "c"}, {"a", "b", "c", "d", "e"}) == 0.4

    def test_nothing_covered(self):
        assert coverage_score(set(), {"a", "b"}) == 0.0

    def test_foreign_ids_dropped_by_intersection(self):
        assert coverage_score({"a", "b", "z"}, {"a", "b"}) == 1.0

    def test_no_aspects_is_an_error(self):
        with pytest.raises(ScoreError, match="no aspects"):
            coverage_score({"a"}, set())


class TestIcatBeta:
    def test_harmonic_mean_of_equal_scores(self):
        assert icat_beta(0.5, 0.5, 1.0) == 0.5

    def test_zero_annihilates(self):
        assert icat_beta(1.0, 0.0, 1.0) == 0.0

    def test_direct_formula_value(self):
        # (1+1) * 0.25 * 0.75 / (0.25 + 0.75) = 0.375
        assert icat_beta(0.25, 0.75, 1.0) == pytest.approx(0.375, abs=1e-12)

    def test_large_beta_limit_is_coverage(self):
        assert icat_beta(0.25, 0.75, 1e6) == pytest.approx(0.75, abs=1e-4)

    def test_nonpositive_beta_rejected(self):
        with pytest.raises(ScoreError):
            icat_beta(0.5, 0.5, 0.0)
        with pytest.raises(ScoreError):
            icat_beta(0.5, 0.5, -1.0)

    def test_out_of_range_scores_rejected(self):
        with pytest.raises(ScoreError):
            icat_beta(1.5, 0.5, 1.0)

    @given(a=unit, b=unit, beta=betas)
    @settings(max_examples=300)
    def test_bounded_by_min_and_max(self, a, b, beta):
        value = icat_beta(a, b, beta)
        assert min(a, b) - 1e-12 <= value <= max(a, b) + 1e-12

    @given(a=unit, b=unit)
    @settings(max_examples=200)
    def test_symmetry_at_beta_one(self, a, b):
        assert icat_beta(a, b, 1.0) == icat_beta(b, a, 1.0)

    @given(a=realistic_unit, b=realistic_unit, beta=betas)
    @settings(max_examples=200)
    def test_zero_iff_zero_product(self, a, b, beta):
        # "a*b == 0" in real arithmetic, i.e. a factor is zero (the literal
        # float product can underflow to 0 for subnormal inputs).
        assert (icat_beta(a, b, beta) == 0.0) == (a == 0.0 or b == 0.0)

    @given(a=positive_unit, b=positive_unit)
    @settings(max_examples=200)
    def test_beta_limits(self, a, b):
        assert abs(icat_beta(a, b, 1e-6) - a) < 1e-4
        assert abs(icat_beta(a, b, 1e6) - b) < 1e-4

    @given(
        a=unit, b=unit, beta=betas,
        bump=st.floats(min_value=1e-6, max_value=0.5, allow_nan=False),
    )
    @settings(max_examples=200)
    def test_monotone_in_each_argument(self, a, b, beta, bump):
        a2 = min(1.0, a + bump)
        b2 = min(1.0, b + bump)
        base = icat_beta(a, b, beta)
        assert icat_beta(a2, b, beta) >= base - 1e-12
        assert icat_beta(a, b2, beta) >= base - 1e-12


class TestScorePair:
    def test_valid(self):
        pair = ScorePair(0.3, 0.7)
        assert pair.s_fact == 0.3

    def test_invalid(self):
        with pytest.raises(ScoreError):
            ScorePair(1.1, 0.0)


class TestQueryReport:
    def test_build_computes_consistent_icat(self):
        report = make_report("q1", (4, 3), {"1", "3"}, 5)
        assert report.scores.s_fact == 0.75
        assert report.scores.s_coverage == 0.4
        assert report.icat == icat_beta(0.75, 0.4, 1.0)

    def test_zero_claims_zero_everything(self):
        report = make_report("q1", (0, 0), (), 5)
        assert report.scores.s_fact == 0.0
        assert report.scores.s_coverage == 0.0
        assert report.icat == 0.0

    def test_inconsistent_icat_rejected(self):
        good = make_report("q1", (4, 3), {"1"}, 5)
        with pytest.raises(ScoreError):
            QueryReport(
                query_id="q1",
                variant="S",
                claims_total=4,
                claims_grounded=3,
                aspects_total=5,
                aspects_covered=frozenset({"1"}),
                scores=good.scores,
                icat=good.icat + 0.1,
                beta=1.0,
            )

    def test_grounded_exceeding_total_rejected(self):
        with pytest.raises(ScoreError):
            make_report("q1", (2, 3), set(), 5)


class TestAggregate:
    def test_singleton(self):
        report = make_report("q1", (5, 2), {"1", "2"}, 5)
        agg = aggregate([report])
        assert agg.mean_icat == report.icat
        assert agg.mean_s_fact == report.scores.s_fact

    def test_arithmetic_mean(self):
        # icat values 0.2 and 0.6 -> mean 0.4
        r1 = make_report("q1", (5, 1), {"1"}, 5)  # s_fact 0.2, cov 0.2 -> icat 0.2
        r2 = make_report("q2", (5, 3), {"1", "2", "3"}, 5)  # 0.6 / 0.6 -> 0.6
        assert r1.icat == pytest.approx(0.2)
        assert r2.icat == pytest.approx(0.6)
        assert aggregate([r1, r2]).mean_icat == pytest.approx(0.4)

    def test_mean_does_not_commute_with_harmonic_mean(self):
        # per-query (1.0, 0.0) and (0.0, 1.0): each ICAT_1 is 0, so the macro
        # mean is 0, while the harmonic mean of the column means (0.5, 0.5)
        # would be 0.5.
        r1 = make_report("q1", (3, 3), set(), 4)  # s_fact 1.0, cov 0.0
        r2 = make_report("q2", (3, 0), (), 4)  # s_fact 0.0 ... coverage must be 1.0
        # a report with zero grounded claims cannot cover aspects; build the
        # (0.0, 1.0) corner directly from a degenerate-but-legal report:
        r2 = QueryReport(
            query_id="q2",
            variant="S",
            claims_total=3,
            claims_grounded=0,
            aspects_total=4,
            aspects_covered=frozenset({"1", "2", "3", "4"}),
            scores=ScorePair(0.0, 1.0),
            icat=icat_beta(0.0, 1.0, 1.0),
            beta=1.0,
        )
        agg = aggregate([r1, r2])
        assert agg.mean_icat == 0.0
        assert agg.mean_s_fact == 0.5
        assert agg.mean_s_coverage == 0.5
        assert icat_beta(agg.mean_s_fact, agg.mean_s_coverage, 1.0) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ScoreError):
            aggregate([])

    def test_mixed_beta_rejected(self):
        r1 = make_report("q1", (2, 1), {"1"}, 2, beta=1.0)
        r2 = make_report("q2", (2, 1), {"1"}, 2, beta=2.0)
        with pytest.raises(ScoreError, match="beta"):
            aggregate([r1, r2])

    def test_mixed_variant_rejected(self):
        r1 = make_report("q1", (2, 1), {"1"}, 2, variant="S")
        r2 = make_report("q2", (2, 1), {"1"}, 2, variant="M")
        with pytest.raises(ScoreError, match="variant"):
            aggregate([r1, r2])
