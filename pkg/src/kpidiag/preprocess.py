"""Hypothesis-feature preprocessing: constant drop, numeric binning, tail binning,
chi-squared pruning, one-hot encoding and is-null indicators.

Every statistic here is computed on the pooled control+treatment rows so both
datasets share a single encoding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .stats import contingency_test
from .tabular import (CATEGORICAL, NUMERIC, ColumnData, Dataset, DiagnosisConfig, align_categories,
                      as_categorical)

OTHER = "__other__"
NULL_SUFFIX = ".is_null"


@dataclass(frozen=True)
class EncodedFeature:
    name: str
    source: str
    values_c: np.ndarray
    values_t: np.ndarray

    @property
    def is_null_feature(self) -> bool:
        return self.name.endswith(NULL_SUFFIX) and self.name == self.source + NULL_SUFFIX


@dataclass
class PreprocessLog:
    dropped_constant: list[str] = field(default_factory=list)
    dropped_uninformative: list[tuple[str, float]] = field(default_factory=list)
    binned: list[tuple[str, int, int]] = field(default_factory=list)
    warnings: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dropped_constant": list(self.dropped_constant),
            "dropped_uninformative": [{"name": n, "p_value": p} for n, p in self.dropped_uninformative],
            "binned": [{"name": n, "kept_bins": k, "other_count": c} for n, k, c in self.binned],
            "warnings": [list(w) for w in self.warnings],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PreprocessLog":
        return cls(
            dropped_constant=list(d["dropped_constant"]),
            dropped_uninformative=[(e["name"], e["p_value"]) for e in d["dropped_uninformative"]],
            binned=[(e["name"], e["kept_bins"], e["other_count"]) for e in d["binned"]],
            warnings=[tuple(w) for w in d.get("warnings", [])],
        )


def pool_column(control: Dataset, treatment: Dataset, name: str) -> ColumnData:
    """Concatenate one column over control rows then treatment rows."""
    a, b = control[name], treatment[name]
    if a.kind == b.kind and a.kind != CATEGORICAL:
        return ColumnData(a.kind, values=np.concatenate([a.values, b.values]))
    cats, (ca, cb) = align_categories(a, b)
    return ColumnData(CATEGORICAL, codes=np.concatenate([ca, cb]), categories=cats)


def _distinct_count(col: ColumnData) -> int:
    nulls = int(col.null_mask().any())
    if col.kind == CATEGORICAL:
        return len(np.unique(col.codes[col.codes >= 0])) + nulls
    v = col.values
    return len(np.unique(v[~np.isnan(v)])) + nulls


def drop_constant(features: Sequence[str], control: Dataset, treatment: Dataset):
    """Split ``features`` into (kept, dropped); a feature is dropped when the pooled
    rows hold a single distinct value, null included."""
    pooled = {name: pool_column(control, treatment, name) for name in features}
    return _drop_constant(pooled)


def _drop_constant(pooled: Mapping[str, ColumnData]):
    kept, dropped = [], []
    for name, col in pooled.items():
        (dropped if _distinct_count(col) <= 1 else kept).append(name)
    return kept, dropped


def bin_tail(column: ColumnData, max_bins: int) -> ColumnData:
    """Keep the ``max_bins - 1`` most frequent labels, relabel the rest as ``__other__``.

    Frequency ties are broken lexicographically. Nulls are left untouched.
    """
    if max_bins < 2:
        raise ValueError("max_bins must be at least 2")
    column = as_categorical(column)
    counts = np.bincount(column.codes[column.codes >= 0], minlength=len(column.categories))
    present = [(-int(counts[i]), lab, i) for i, lab in enumerate(column.categories) if counts[i] > 0]
    present.sort()
    keep = present[: max_bins - 1]
    if len(keep) == len(present):
        return column
    labels = sorted([lab for _, lab, _ in keep] + [OTHER])
    pos = {lab: i for i, lab in enumerate(labels)}
    remap = np.full(len(column.categories) + 1, pos[OTHER], dtype=np.int32)
    for _, lab, i in keep:
        remap[i] = pos[lab]
    remap[-1] = -1
    return ColumnData(CATEGORICAL, codes=remap[column.codes], categories=labels)


def quantile_edges(values: np.ndarray, k: int) -> np.ndarray:
    """Nearest-rank i/k quantile edges, duplicates merged, edges at the maximum removed."""
    v = np.sort(values)
    n = len(v)
    ranks = [-(-i * n // k) for i in range(1, k)]  # ceil(i*n/k), 1-based
    edges = np.unique(v[np.array(ranks, dtype=np.int64) - 1])
    return edges[edges < v[-1]]


def binarize_numeric(column: ColumnData, k: int) -> ColumnData:
    """Quantile-bin a numeric column into labels ``q1``..``qm`` (m <= k)."""
    if k < 2:
        raise ValueError("k must be at least 2")
    vals = column.values
    mask = ~np.isnan(vals)
    if not mask.any():
        return ColumnData(CATEGORICAL, codes=np.full(len(vals), -1, np.int32), categories=())
    edges = quantile_edges(vals[mask], k)
    labels = [f"q{i + 1}" for i in range(len(edges) + 1)]
    order = sorted(range(len(labels)), key=lambda i: labels[i])
    rank_of = np.empty(len(labels), dtype=np.int32)
    rank_of[order] = np.arange(len(labels), dtype=np.int32)
    codes = np.full(len(vals), -1, dtype=np.int32)
    codes[mask] = rank_of[np.searchsorted(edges, vals[mask], side="left")]
    return ColumnData(CATEGORICAL, codes=codes, categories=sorted(labels))


def informativeness_p(column: ColumnData, target: np.ndarray) -> float:
    """p-value of the bins x target contingency test (null rows excluded)."""
    ok = (column.codes >= 0) & ~np.isnan(target)
    codes = column.codes[ok]
    fail = target[ok] == 1.0
    n_bins = len(column.categories)
    if n_bins < 2 or fail.all() or not fail.any():
        return 1.0
    table = np.stack([np.bincount(codes[~fail], minlength=n_bins),
                      np.bincount(codes[fail], minlength=n_bins)], axis=1)
    if (table.sum(axis=1) > 0).sum() < 2:
        return 1.0
    return contingency_test(table, 0.05).p_value


def prune_uninformative(features: Mapping[str, ColumnData], target: np.ndarray,
                        prune_p_threshold: float):
    """Drop features whose bins carry no information about the target.

    Returns (kept names, [(dropped name, p_value)]); a feature is dropped iff its
    p-value exceeds ``prune_p_threshold``.
    """
    kept, dropped = [], []
    for name, col in features.items():
        p = informativeness_p(col, target)
        if p > prune_p_threshold:
            dropped.append((name, p))
        else:
            kept.append(name)
    return kept, dropped


def _frozen_bool(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=bool)
    a.flags.writeable = False
    return a


def encode(control: Dataset, treatment: Dataset, config: DiagnosisConfig):
    """Run the full hypothesis-feature pipeline.

    Returns ``(features, log)`` with features ordered by source name, then bin label,
    each source's ``.is_null`` indicator following its bins.
    """
    log = PreprocessLog()
    n_c = control.row_count
    pooled = {name: pool_column(control, treatment, name) for name in sorted(config.hypothesis_columns)}
    kept, log.dropped_constant = _drop_constant(pooled)

    binned: dict[str, ColumnData] = {}
    nulls: dict[str, np.ndarray] = {}
    for name in kept:
        col = pooled[name]
        nulls[name] = col.null_mask()
        if col.kind == NUMERIC:
            col = binarize_numeric(col, config.numeric_hypothesis_bins)
        col = as_categorical(col)
        before = len(col.categories)
        col = bin_tail(col, config.max_bins)
        if OTHER in col.categories and len(col.categories) < before:
            other = int((col.codes == col.categories.index(OTHER)).sum())
            log.binned.append((name, len(col.categories) - 1, other))
        binned[name] = col

    target = np.concatenate([control[config.target_column].values,
                             treatment[config.target_column].values])
    survivors, log.dropped_uninformative = prune_uninformative(
        binned, target, config.prune_p_threshold)
    survivors = set(survivors)

    features: list[EncodedFeature] = []
    for name in kept:
        if name in survivors:
            col = binned[name]
            counts = np.bincount(col.codes[col.codes >= 0], minlength=len(col.categories))
            for code, label in enumerate(col.categories):
                if counts[code] == 0:
                    continue
                hit = col.codes == code
                features.append(EncodedFeature(f"{name}={label}", name,
                                               _frozen_bool(hit[:n_c]), _frozen_bool(hit[n_c:])))
        if config.add_is_null and nulls[name].any():
            miss = nulls[name]
            features.append(EncodedFeature(name + NULL_SUFFIX, name,
                                           _frozen_bool(miss[:n_c]), _frozen_bool(miss[n_c:])))
    if not config.add_is_null:
        log.warnings.append(("is_null_excluded",
                             "is-null features excluded; missing values may carry meaning"))
    if not features:
        log.warnings.append(("no_surviving_features",
                             "no hypothesis features survived preprocessing; ranking will be empty"))
    return features, log
