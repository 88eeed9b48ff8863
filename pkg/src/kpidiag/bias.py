"""Population bias check over invariant features and bias normalization by
propensity-score matching on histogram bins."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .forest import NULL_LABEL, RandomForest, fit_forest, fit_layout, seed_stream
from .stats import contingency_test, percent_deviation, TestResult
from .tabular import Dataset, DiagnosisConfig, ForestParams, align_categories


class NoOverlapError(RuntimeError):
    """Propensity histograms of control and treatment share no bin."""

    code = "no_overlap"


@dataclass(frozen=True)
class FeatureBias:
    feature: str
    test: TestResult
    deviation_pct: float
    biased: bool
    bins: tuple[tuple[str, float, float], ...]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "test": self.test.to_dict(),
            "deviation_pct": self.deviation_pct,
            "biased": self.biased,
            "bins": [{"bin": b, "occurrence_pct_c": c, "occurrence_pct_t": t} for b, c, t in self.bins],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureBias":
        return cls(d["feature"], TestResult.from_dict(d["test"]), d["deviation_pct"], d["biased"],
                   tuple((b["bin"], b["occurrence_pct_c"], b["occurrence_pct_t"]) for b in d["bins"]))


@dataclass(frozen=True)
class BiasReport:
    entries: tuple[FeatureBias, ...]

    @property
    def any_bias(self) -> bool:
        return any(e.biased for e in self.entries)

    @property
    def biased_features(self) -> list[str]:
        return [e.feature for e in self.entries if e.biased]

    def to_dict(self) -> dict:
        return {"any_bias": self.any_bias, "entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BiasReport":
        return cls(tuple(FeatureBias.from_dict(e) for e in d["entries"]))


def feature_histograms(control: Dataset, treatment: Dataset, column: str):
    """Per-bin counts for one categorical column, nulls as ``__null__``."""
    labels, (cc, ct) = align_categories(control[column], treatment[column])
    k = len(labels)
    hc = np.bincount(np.where(cc < 0, k, cc), minlength=k + 1)
    ht = np.bincount(np.where(ct < 0, k, ct), minlength=k + 1)
    names = list(labels) + [NULL_LABEL]
    keep = (hc + ht) > 0
    return ([n for n, kp in zip(names, keep) if kp], hc[keep], ht[keep])


def _feature_bias(control, treatment, column, p_threshold, dev_threshold) -> FeatureBias:
    names, hc, ht = feature_histograms(control, treatment, column)
    if len(names) >= 2:
        test = contingency_test(np.stack([hc, ht], axis=1), p_threshold)
    else:
        test = TestResult(0.0, 1, 1.0, False)
    dev = percent_deviation(dict(zip(names, hc.tolist())), dict(zip(names, ht.tolist())))
    pc = 100.0 * hc / hc.sum()
    pt = 100.0 * ht / ht.sum()
    bins = sorted(zip(names, pc.tolist(), pt.tolist()), key=lambda b: (-abs(b[1] - b[2]), b[0]))
    return FeatureBias(column, test, dev, bool(test.significant and dev > dev_threshold), tuple(bins))


def bias_check(control: Dataset, treatment: Dataset, invariant_columns: Sequence[str],
               bias_p_threshold: float = 0.05, bias_deviation_threshold_pct: float = 2.0) -> BiasReport:
    """Chi-squared test and percent deviation per invariant feature.

    A feature is biased when its distribution shift is significant and its percent
    deviation exceeds the threshold. Entries come back sorted by deviation,
    largest first, ties by name.
    """
    if not invariant_columns:
        raise ValueError("bias_check needs at least one invariant column")
    if control.row_count == 0 or treatment.row_count == 0:
        raise ValueError("bias_check needs nonempty datasets")
    entries = [_feature_bias(control, treatment, c, bias_p_threshold, bias_deviation_threshold_pct)
               for c in invariant_columns]
    entries.sort(key=lambda e: (-e.deviation_pct, e.feature))
    return BiasReport(tuple(entries))


PropensityModel = RandomForest


def fit_propensity(control: Dataset, treatment: Dataset, invariant_columns: Sequence[str],
                   params: ForestParams = ForestParams(), seed: int = 0, *, oob: bool = False):
    """Random forest predicting membership in control from invariant features."""
    n = control.row_count + treatment.row_count
    if n < 2 * params.min_leaf:
        raise ValueError(f"need at least {2 * params.min_leaf} rows to fit, got {n}")
    layout = fit_layout([control, treatment], invariant_columns)
    codes = np.concatenate([layout.code_matrix(control), layout.code_matrix(treatment)])
    labels = np.r_[np.ones(control.row_count, bool), np.zeros(treatment.row_count, bool)]
    return fit_forest(codes, labels, layout, n_trees=params.n_trees, max_depth=params.max_depth,
                      min_leaf=params.min_leaf, seed=seed, oob=oob)


def score(model: PropensityModel, dataset: Dataset) -> np.ndarray:
    """Per-row propensity: mean over trees of the leaf's control fraction."""
    return model.predict(dataset)


def score_bins(scores_c: np.ndarray, scores_t: np.ndarray, caliper_coefficient: float):
    """Bin index per score using width = coefficient x population std of pooled scores."""
    pooled = np.concatenate([scores_c, scores_t])
    width = caliper_coefficient * float(np.std(pooled))
    if not width > 0:
        return np.zeros(len(scores_c), np.int64), np.zeros(len(scores_t), np.int64), 0.0
    return (np.floor(scores_c / width).astype(np.int64),
            np.floor(scores_t / width).astype(np.int64), width)


def match_on_bins(scores_c, scores_t, caliper_coefficient: float, seed: int):
    """Randomly match control and treatment rows on the intersection of score bins.

    Returns ``(control_idx, treatment_idx, bin_width, matched_fraction)``; within
    each bin ``min(count_c, count_t)`` rows are drawn without replacement from
    each side. A zero-width (constant scores) case uses a single bin.
    """
    scores_c = np.asarray(scores_c, dtype=np.float64)
    scores_t = np.asarray(scores_t, dtype=np.float64)
    if len(scores_c) == 0 or len(scores_t) == 0:
        raise ValueError("both score vectors must be nonempty")
    bc, bt, width = score_bins(scores_c, scores_t, caliper_coefficient)
    rng = seed_stream(seed, 2)
    out_c, out_t = [], []
    for b in np.intersect1d(bc, bt):
        ic = np.flatnonzero(bc == b)
        it = np.flatnonzero(bt == b)
        m = min(len(ic), len(it))
        out_c.append(np.sort(rng.choice(ic, size=m, replace=False)))
        out_t.append(np.sort(rng.choice(it, size=m, replace=False)))
    if not out_c:
        raise NoOverlapError("no_overlap: control and treatment propensity scores share no bin")
    ci = np.concatenate(out_c)
    ti = np.concatenate(out_t)
    return ci, ti, width, len(ci) / min(len(scores_c), len(scores_t))


@dataclass(frozen=True)
class NormalizedPair:
    control_idx: np.ndarray
    treatment_idx: np.ndarray
    bin_width: float
    matched_fraction: float
    matched_on: tuple[str, ...] = ()
    residual_bias: BiasReport | None = None
    warnings: tuple[tuple[str, str], ...] = field(default=())

    @property
    def n_pairs(self) -> int:
        return len(self.control_idx)

    def summary(self) -> dict:
        return {
            "matched_on": list(self.matched_on),
            "n_pairs": self.n_pairs,
            "bin_width": self.bin_width,
            "matched_fraction": self.matched_fraction,
            "residual_bias": None if self.residual_bias is None else self.residual_bias.to_dict(),
        }


def normalize(control: Dataset, treatment: Dataset, bias_report: BiasReport,
              config: DiagnosisConfig) -> NormalizedPair:
    """Propensity-score matching on the biased invariant features.

    The matched subsets are re-checked for bias over every invariant column;
    the result is kept as ``residual_bias``.
    """
    if not bias_report.any_bias:
        raise ValueError("normalize requires a bias report with at least one biased feature")
    biased = bias_report.biased_features
    model = fit_propensity(control, treatment, biased, config.forest, config.seed)
    ci, ti, width, frac = match_on_bins(score(model, control), score(model, treatment),
                                        config.caliper_coefficient, config.seed)
    residual = bias_check(control.take(ci), treatment.take(ti), config.invariant_columns,
                          config.bias_p_threshold, config.bias_deviation_threshold_pct)
    warns = []
    if residual.any_bias:
        warns.append(("residual_bias", "bias remains after normalization in: "
                      + ", ".join(residual.biased_features)))
    if frac < config.min_matched_fraction:
        warns.append(("low_matched_fraction",
                      f"matched fraction {frac:.3f} below {config.min_matched_fraction}"))
    return NormalizedPair(ci, ti, width, frac, tuple(biased), residual, tuple(warns))
