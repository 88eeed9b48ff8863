"""Chi-squared tests and distribution distances.

The chi-squared survival function is evaluated through the regularized
incomplete gamma function: a power series for P(a, x) below ``x = a + 1`` and
a modified-Lentz continued fraction for Q(a, x) above it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from statistics import NormalDist
from typing import Mapping

import numpy as np

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


class StatsDomainError(ValueError):
    pass


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this

    statistic: float
    dof: int
    p_value: float
    significant: bool

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TestResult":
        return cls(**d)


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) = x^a e^-x / Gamma(a+1) * sum_n x^n / ((a+1)...(a+n))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cfrac(a: float, x: float) -> float:
    # Q(a, x) via Lentz on the even form of Legendre's continued fraction
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) for a > 0, x >= 0."""
    if a <= 0:
        raise StatsDomainError("gamma_q requires a > 0")
    if x < 0:
        raise StatsDomainError("gamma_q requires x >= 0")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _gamma_series(a, x)))
    return min(1.0, max(0.0, _gamma_cfrac(a, x)))


def chi2_sf(x: float, dof: int) -> float:
    """Survival function 1 - F(x; dof) of the chi-squared distribution."""
    if dof < 1 or int(dof) != dof:
        raise StatsDomainError(f"dof must be a positive integer, got {dof!r}")
    if not x >= 0:
        raise StatsDomainError(f"x must be nonnegative, got {x!r}")
    if math.isinf(x):
        return 0.0
    return gamma_q(dof / 2.0, x / 2.0)


def _pearson(table: np.ndarray) -> float:
    rows = table.sum(axis=1, keepdims=True)
    cols = table.sum(axis=0, keepdims=True)
    expected = rows * cols / table.sum()
    return float(((table - expected) ** 2 / expected).sum())


def contingency_test(table, threshold: float) -> TestResult:
    """Pearson chi-squared independence test on a k x 2 table of counts.

    Rows with no counts on either side are dropped first; if fewer than two
    rows remain the result is statistic 0, p 1.
    """
    t = np.asarray(table, dtype=np.float64)
    if t.ndim != 2 or t.shape[1] != 2 or t.shape[0] < 2:
        raise StatsDomainError(f"expected a k x 2 table with k >= 2, got shape {t.shape}")
    if (t < 0).any() or not np.isfinite(t).all():
        raise StatsDomainError("counts must be finite and nonnegative")
    if (t.sum(axis=0) < 1).any():
        raise StatsDomainError("each column of the table needs a positive total")
    t = t[t.sum(axis=1) > 0]
    if t.shape[0] < 2:
        return TestResult(0.0, 1, 1.0, 1.0 < threshold)
    dof = t.shape[0] - 1
    stat = _pearson(t)
    p = chi2_sf(stat, dof)
    return TestResult(stat, dof, p, p < threshold)


def two_proportion_test(successes_c: int, n_c: int, successes_t: int, n_t: int,
                        threshold: float) -> TestResult:
    """Pearson chi-squared on the 2x2 table of successes/failures, no continuity correction."""
    if n_c < 1 or n_t < 1:
        raise StatsDomainError("both sample sizes must be at least 1")
    if not (0 <= successes_c <= n_c and 0 <= successes_t <= n_t):
        raise StatsDomainError("successes must lie in [0, n] on each side")
    pooled = successes_c + successes_t
    total = n_c + n_t
    if pooled == 0 or pooled == total:
        return TestResult(0.0, 1, 1.0, 1.0 < threshold)
    # closed form of the 2x2 Pearson statistic
    a, b = successes_c, n_c - successes_c
    c, d = successes_t, n_t - successes_t
    num = float(a * d - b * c) ** 2 * total
    stat = num / (float(n_c) * n_t * pooled * (total - pooled))
    p = chi2_sf(stat, 1)
    return TestResult(stat, 1, p, p < threshold)


def percent_deviation(hist_c: Mapping, hist_t: Mapping) -> float:
    """100 x total-variation distance between two count histograms (bins unioned)."""
    tot_c = float(sum(hist_c.values()))
    tot_t = float(sum(hist_t.values()))
    if tot_c <= 0 or tot_t <= 0:
        raise StatsDomainError("both histograms need a positive total")
    bins = set(hist_c) | set(hist_t)
    dist = sum(abs(hist_c.get(b, 0) / tot_c - hist_t.get(b, 0) / tot_t) for b in bins)
    return min(100.0, 50.0 * dist)


def two_proportion_power(p_c: float, p_t: float, n_c: int, n_t: int, alpha: float = 0.05) -> float:
    """Normal-approximation power of the two-sided two-proportion test."""
    z = NormalDist()
    pooled = (p_c * n_c + p_t * n_t) / (n_c + n_t)
    se0 = math.sqrt(pooled * (1 - pooled) * (1 / n_c + 1 / n_t))
    se1 = math.sqrt(p_c * (1 - p_c) / n_c + p_t * (1 - p_t) / n_t)
    crit = z.inv_cdf(1 - alpha / 2) * se0
    diff = abs(p_t - p_c)
    return z.cdf((diff - crit) / se1) + z.cdf((-diff - crit) / se1)
