import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpidiag.stats import (StatsDomainError, chi2_sf, contingency_test, gamma_q, percent_deviation,
                           two_proportion_power, two_proportion_test)

from oracles import chi2_sf as oracle_sf


# frozen oracle values: mpmath at 40 digits
FROZEN = {
    (3.841, 1): 0.050013683763956699,
    (12.5, 1): 4.0695201744495894e-4,
    (19.78021978021978, 1): 8.6877116770000474e-6,
}


@pytest.mark.parametrize("key", sorted(FROZEN))
def test_frozen_oracle_values(key):
    assert oracle_sf(*key) == pytest.approx(FROZEN[key], rel=1e-14)
    assert chi2_sf(*key) == pytest.approx(FROZEN[key], rel=1e-10)


def test_chi2_sf_edges():
    assert chi2_sf(0, 1) == 1.0
    assert chi2_sf(1e6, 1) == pytest.approx(0.0, abs=1e-300)
    assert chi2_sf(math.inf, 3) == 0.0
    assert abs(chi2_sf(3.841, 1) - 0.05) < 1e-3


@pytest.mark.parametrize("x, dof", [(-1, 1), (1, 0), (1, 1.5), (float("nan"), 1)])
def test_chi2_sf_domain(x, dof):
    with pytest.raises(StatsDomainError):
        chi2_sf(x, dof)


def test_gamma_q_domain():
    with pytest.raises(StatsDomainError):
        gamma_q(0, 1)


@pytest.mark.parametrize("dof", [1, 2, 5, 30, 200])
def test_chi2_sf_matches_oracle_wide(dof):
    for x in [0.001, 0.5, dof * 0.9, dof + 2.0, dof * 3.0, 300.0]:
        assert chi2_sf(x, dof) == pytest.approx(oracle_sf(x, dof), rel=1e-10, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 200), st.floats(0, 50), st.integers(1, 40))
def test_chi2_sf_monotone_and_bounded(x, dx, dof):
    a, b = chi2_sf(x, dof), chi2_sf(x + dx, dof)
    assert 0.0 <= b <= a <= 1.0


def test_two_proportion_oracle():
    # expected counts: 20 failures / 80 passes per side
    hand = 2 * ((10 - 20) ** 2 / 20 + (90 - 80) ** 2 / 80)
    assert hand == 12.5
    r = two_proportion_test(10, 100, 30, 100, 0.05)
    assert r.statistic == pytest.approx(12.5, abs=1e-9)
    assert r.p_value == pytest.approx(4.07e-4, rel=2e-3)
    assert r.dof == 1 and r.significant


def test_two_proportion_identical_and_degenerate():
    r = two_proportion_test(10, 100, 10, 100, 0.05)
    assert r.statistic == 0 and r.p_value == 1 and not r.significant
    r = two_proportion_test(0, 100, 0, 50, 0.05)
    assert (r.statistic, r.p_value) == (0.0, 1.0)
    r = two_proportion_test(100, 100, 50, 50, 0.05)
    assert (r.statistic, r.p_value) == (0.0, 1.0)


@pytest.mark.parametrize("args", [(1, 0, 1, 1), (5, 4, 1, 1), (-1, 4, 1, 1)])
def test_two_proportion_domain(args):
    with pytest.raises(StatsDomainError):
        two_proportion_test(*args, 0.05)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 400), st.integers(1, 400), st.data())
def test_two_proportion_symmetries(n_c, n_t, data):
    s_c = data.draw(st.integers(0, n_c))
    s_t = data.draw(st.integers(0, n_t))
    r = two_proportion_test(s_c, n_c, s_t, n_t, 0.05)
    swapped = two_proportion_test(s_t, n_t, s_c, n_c, 0.05)
    relabeled = two_proportion_test(n_c - s_c, n_c, n_t - s_t, n_t, 0.05)
    assert swapped.p_value == pytest.approx(r.p_value, rel=1e-12, abs=1e-300)
    assert relabeled.p_value == pytest.approx(r.p_value, rel=1e-12, abs=1e-300)
    table = contingency_test([[s_c, s_t], [n_c - s_c, n_t - s_t]], 0.05)
    assert table.statistic == pytest.approx(r.statistic, rel=1e-9, abs=1e-12)
    assert table.p_value == pytest.approx(r.p_value, rel=1e-9, abs=1e-300)


def test_contingency_oracle():
    # pooled marginals: rows 130/70, columns 100/100 -> expected 65 and 35
    hand = 2 * (15 ** 2 / 65) + 2 * (15 ** 2 / 35)
    r = contingency_test([[50, 80], [50, 20]], 0.05)
    assert r.statistic == pytest.approx(hand, rel=1e-12)
    assert r.statistic == pytest.approx(19.78, abs=5e-3)
    assert r.p_value == pytest.approx(8.7e-6, rel=1e-2)
    assert r.p_value == pytest.approx(oracle_sf(hand, 1), rel=1e-10)


def test_contingency_identical():
    r = contingency_test([[50, 50], [50, 50]], 0.05)
    assert r.statistic == 0 and r.p_value == 1


def test_contingency_drops_empty_rows():
    full = contingency_test([[50, 80], [0, 0], [50, 20]], 0.05)
    assert full.dof == 1
    assert full.statistic == pytest.approx(contingency_test([[50, 80], [50, 20]], 0.05).statistic)
    one = contingency_test([[5, 7], [0, 0]], 0.05)
    assert (one.statistic, one.p_value) == (0.0, 1.0)


def test_contingency_errors():
    with pytest.raises(StatsDomainError):
        contingency_test([[1, -1], [2, 2]], 0.05)
    with pytest.raises(StatsDomainError):
        contingency_test([[1, 2, 3], [1, 2, 3]], 0.05)


def test_threshold_is_strict():
    # p exactly at the threshold is not significant
    r = two_proportion_test(10, 100, 30, 100, 0.05)
    assert two_proportion_test(10, 100, 30, 100, r.p_value).significant is False
    assert two_proportion_test(10, 100, 30, 100, r.p_value * 1.0001).significant is True


def test_percent_deviation_examples():
    assert percent_deviation({"A": 5, "B": 7}, {"A": 5, "B": 7}) == 0.0
    assert percent_deviation({"A": 50, "B": 50}, {"A": 80, "B": 20}) == pytest.approx(30.0)
    assert percent_deviation({"A": 10}, {"B": 10}) == 100.0
    assert percent_deviation({"A": 5000, "B": 5000}, {"A": 6000, "B": 4000}) == pytest.approx(10.0)
    with pytest.raises(StatsDomainError):
        percent_deviation({"A": 0}, {"A": 1})


hist = st.dictionaries(st.sampled_from("abcdef"), st.integers(0, 50), min_size=1).filter(
    lambda h: sum(h.values()) > 0)


@settings(max_examples=200, deadline=None)
@given(hist, hist)
def test_percent_deviation_properties(a, b):
    d = percent_deviation(a, b)
    assert 0.0 <= d <= 100.0
    assert d == pytest.approx(percent_deviation(b, a), abs=1e-12)
    keys = set(a) | set(b)
    ta, tb = sum(a.values()), sum(b.values())
    equal = all(a.get(k, 0) * tb == b.get(k, 0) * ta for k in keys)
    assert (d < 1e-12) == equal


def test_calibration_under_null():
    # Monte Carlo: rejection rate of a 0.05 test under H0 stays near 5%
    rng = np.random.default_rng(2024)
    trials, n, p = 2000, 10_000, 0.1
    sc = rng.binomial(n, p, trials)
    st_ = rng.binomial(n, p, trials)
    rate = np.mean([two_proportion_test(int(a), n, int(b), n, 0.05).significant for a, b in zip(sc, st_)])
    assert abs(rate - 0.05) <= 0.015


def test_power_formula_limits():
    assert two_proportion_power(0.05, 0.05, 1000, 1000) == pytest.approx(0.05, abs=1e-9)
    assert two_proportion_power(0.05, 0.5, 1000, 1000) == pytest.approx(1.0, abs=1e-9)
    from scipy.stats import norm
    p1, p2, n = 0.05, 0.055, 100_000
    pool = (p1 + p2) / 2
    se0 = math.sqrt(pool * (1 - pool) * 2 / n)
    se1 = math.sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / n)
    crit = norm.ppf(0.975) * se0
    ref = norm.sf((crit - (p2 - p1)) / se1) + norm.cdf((-crit - (p2 - p1)) / se1)
    assert two_proportion_power(p1, p2, n, n) == pytest.approx(ref, abs=1e-12)
