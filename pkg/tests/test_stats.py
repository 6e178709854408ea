import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from dyadic_intent.exceptions import InvalidInputError
from dyadic_intent.stats import (
    NegotiationSample,
    anova,
    box_stats,
    f_sf,
    negotiation_summary,
    tukey_hsd,
)
from oracles import anova_sums, percentile_linear, tukey_q

HAND = [[1, 2, 3], [2, 3, 4], [5, 6, 7]]


def test_anova_hand_case():
    res = anova(HAND)
    ssb, ssw, sst, dfb, dfw, F = anova_sums(HAND)
    assert (ssb, ssw, F, dfb, dfw) == (26, 6, 13, 2, 6)
    assert res.ss_between == pytest.approx(26, abs=1e-9)
    assert res.ss_within == pytest.approx(6, abs=1e-9)
    assert res.F == pytest.approx(13, abs=1e-9)
    assert (res.df_between, res.df_within) == (2, 6)
    # closed-form F tail for df1 = 2
    assert res.p == pytest.approx((1 + 2 * 13 / 6) ** -3, rel=1e-9)


def test_anova_identical_groups():
    res = anova([[1, 2, 3], [1, 2, 3]])
    assert res.F == 0 and res.p == 1


def test_anova_zero_within_variance():
    res = anova([[0, 0, 0, 0], [1, 1, 1, 1]])
    assert res.F == np.inf and res.p == 0


def test_anova_rejects_degenerate_groups():
    with pytest.raises(InvalidInputError):
        anova([[1, 2, 3]])
    with pytest.raises(InvalidInputError):
        anova([[1, 2], [3]])
    with pytest.raises(InvalidInputError):
        anova([[1, np.nan], [3, 4]])


def test_f_tail_matches_scipy():
    for F, d1, d2 in [(0.3, 1, 5), (2.5, 3, 12), (13, 2, 6), (40, 4, 35)]:
        assert f_sf(F, d1, d2) == pytest.approx(sps.f.sf(F, d1, d2), rel=1e-9)


groups_st = st.lists(st.lists(st.floats(-100, 100), min_size=2, max_size=8), min_size=2, max_size=5)


@settings(max_examples=200, deadline=None)
@given(groups_st)
def test_sum_of_squares_partition(groups):
    res = anova(groups)
    scale = max(1.0, res.ss_total)
    assert res.ss_total == pytest.approx(res.ss_between + res.ss_within, abs=1e-9 * scale)
    ssb, ssw = sums_of_squares(groups)
    assert res.ss_between == pytest.approx(ssb, abs=1e-8 * scale)
    assert res.ss_within == pytest.approx(ssw, abs=1e-8 * scale)


def sums_of_squares(groups):
    allx = [x for g in groups for x in g]
    grand = sum(allx) / len(allx)
    ssb = sum(len(g) * (sum(g) / len(g) - grand) ** 2 for g in groups)
    ssw = sum((x - sum(g) / len(g)) ** 2 for g in groups for x in g)
    return ssb, ssw


@settings(max_examples=100, deadline=None)
@given(groups_st, st.floats(-50, 50), st.floats(0.1, 10))
def test_f_shift_and_scale_invariant(groups, c, a):
    base = anova(groups)
    if base.ss_within < 1e-6 or base.ss_between < 1e-6:
        return
    moved = anova([[a * x + c for x in g] for g in groups])
    assert moved.F == pytest.approx(base.F, rel=1e-6)


def test_tukey_hand_case_q():
    res = tukey_hsd(HAND)
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        assert res.pair(i, j).q == pytest.approx(tukey_q(HAND, i, j), abs=1e-9)
    assert res.pair(0, 2).mean_diff == pytest.approx(-4)
    assert res.pair(2, 0).mean_diff == pytest.approx(4)


def test_tukey_two_groups_matches_anova():
    rng = np.random.default_rng(0)
    for _ in range(10):
        g = [rng.normal(0, 1, 7), rng.normal(0.8, 1, 9)]
        a = anova(g)
        c = tukey_hsd(g).pairs[0]
        assert c.q ** 2 == pytest.approx(2 * a.F, rel=1e-12)
        assert c.p_adj == pytest.approx(a.p, abs=1e-6)


def test_tukey_identical_groups():
    res = tukey_hsd([[1, 2, 3], [1, 2, 3], [1, 2, 3]])
    assert all(c.p_adj == 1 for c in res.pairs)
    assert res.significant_pairs == []


def test_tukey_flags_far_group():
    rng = np.random.default_rng(1)
    g = {"a": rng.normal(0, 1, 10), "b": rng.normal(0, 1, 10), "far": rng.normal(20, 1, 10)}
    res = tukey_hsd(g)
    sig = set(res.significant_pairs)
    assert ("a", "far") in sig and ("b", "far") in sig


def test_tukey_matches_scipy():
    rng = np.random.default_rng(2)
    g = [rng.normal(0, 1, 8), rng.normal(1, 1, 11), rng.normal(2, 1, 6)]
    ref = sps.tukey_hsd(*g)
    res = tukey_hsd(g)
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        assert res.pair(i, j).p_adj == pytest.approx(ref.pvalue[i, j], abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_tukey_p_monotone_in_difference(d1, d2):
    base = np.array([-1.0, 0.0, 1.0, 0.5, -0.5])
    lo, hi = sorted((d1, d2))
    p_lo = tukey_hsd([base, base + lo]).pairs[0].p_adj
    p_hi = tukey_hsd([base, base + hi]).pairs[0].p_adj
    assert p_hi <= p_lo + 1e-9


def test_box_outlier():
    b = box_stats([1, 2, 3, 4, 100])
    assert b.outliers == (100.0,)
    assert (b.q1, b.median, b.q3) == (2, 3, 4)
    assert b.upper_whisker == 4 and b.lower_whisker == 1


def test_box_single_sample():
    b = box_stats([7.5])
    assert b.q1 == b.median == b.q3 == b.mean == 7.5
    assert b.outliers == ()


def test_box_percentiles_match_oracle():
    rng = np.random.default_rng(3)
    for n in (2, 5, 9, 20):
        x = rng.normal(size=n)
        b = box_stats(x)
        s = sorted(x)
        assert (b.q1, b.median, b.q3) == pytest.approx(
            (percentile_linear(s, 0.25), percentile_linear(s, 0.5), percentile_linear(s, 0.75)), abs=1e-12)


def test_negotiation_summary_groups_by_type():
    samples = [NegotiationSample(f"s{i}", t, d) for i, (t, d) in
               enumerate([("KCG", 0.4), ("KCG", 0.6), ("ConflictingSS", 2.0), ("ConflictingSS", 3.0)])]
    out = negotiation_summary(samples)
    assert list(out) == ["KCG", "ConflictingSS"]
    assert out["KCG"].mean == pytest.approx(0.5)
    with pytest.raises(InvalidInputError):
        negotiation_summary([])
    with pytest.raises(InvalidInputError):
        NegotiationSample("x", "KCG", -1.0)
