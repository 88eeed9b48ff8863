"""Univariate hypothesis-feature ranking by hazard score."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .preprocess import EncodedFeature
from .stats import two_proportion_test


@dataclass(frozen=True)
class RankRow:
    feature: str
    fail_count_t: int
    expected_fail_t: float
    abs_diff: float
    pct_diff: float | None
    hazard_score: float
    p_value: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RankTable:
    rows: list[RankRow] = field(default_factory=list)
    direction: str = "increase"
    warnings: list[tuple[str, str]] = field(default_factory=list)

    @property
    def features(self) -> list[str]:
        return [r.feature for r in self.rows]

    def to_dict(self) -> dict:
        return {"direction": self.direction, "rows": [r.to_dict() for r in self.rows],
                "warnings": [list(w) for w in self.warnings]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RankTable":
        return cls([RankRow(**r) for r in d["rows"]], d["direction"],
                   [tuple(w) for w in d.get("warnings", [])])


def _fail_mask(target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    valid = ~np.isnan(target)
    return valid, valid & (target == 1.0)


def hazard_score(feature_c, feature_t, target_c, target_t) -> float:
    """P_T(f=1 | fail) - P_C(f=1 | fail)."""
    _, fail_c = _fail_mask(np.asarray(target_c, dtype=np.float64))
    _, fail_t = _fail_mask(np.asarray(target_t, dtype=np.float64))
    n_c, n_t = int(fail_c.sum()), int(fail_t.sum())
    if n_c == 0 or n_t == 0:
        raise ValueError("hazard score needs at least one failure in each dataset")
    hit_c = int(np.count_nonzero(np.asarray(feature_c, dtype=bool) & fail_c))
    hit_t = int(np.count_nonzero(np.asarray(feature_t, dtype=bool) & fail_t))
    return hit_t / n_t - hit_c / n_c


def _sort_key(row: RankRow):
    return (-row.hazard_score, -abs(row.abs_diff), row.feature)


def rank_features(features: Sequence[EncodedFeature], target_c, target_t,
                  ranking_p_threshold: float = 0.05, direction: str = "increase",
                  control_idx=None, treatment_idx=None) -> RankTable:
    """Rank encoded features by their contribution to the failure-rate change.

    A feature enters the table when the joint rate of (feature and failure)
    differs significantly between the datasets. ``control_idx`` and
    ``treatment_idx`` restrict both the features and the targets to matched rows.

    ``direction="decrease"`` returns the exact reverse of the increase order.
    """
    if direction not in ("increase", "decrease"):
        raise ValueError("direction must be 'increase' or 'decrease'")
    target_c = np.asarray(target_c, dtype=np.float64)
    target_t = np.asarray(target_t, dtype=np.float64)
    if control_idx is not None:
        target_c = target_c[control_idx]
    if treatment_idx is not None:
        target_t = target_t[treatment_idx]
    valid_c, fail_c = _fail_mask(target_c)
    valid_t, fail_t = _fail_mask(target_t)
    n_c, n_t = int(valid_c.sum()), int(valid_t.sum())
    nf_c, nf_t = int(fail_c.sum()), int(fail_t.sum())
    table = RankTable(direction=direction)
    if n_c == 0 or n_t == 0:
        table.warnings.append(("empty_dataset", "a dataset has no rows with a target value"))
        return table
    if nf_c == 0:
        table.warnings.append(("no_control_failures", "control has no failures; hazard baseline undefined"))
        return table
    if nf_t == 0:
        table.warnings.append(("no_treatment_failures", "treatment has no failures; hazard undefined"))
        return table
    rows = []
    for f in features:
        vc = f.values_c if control_idx is None else f.values_c[control_idx]
        vt = f.values_t if treatment_idx is None else f.values_t[treatment_idx]
        hit_c = int(np.count_nonzero(vc & fail_c))
        hit_t = int(np.count_nonzero(vt & fail_t))
        test = two_proportion_test(hit_c, n_c, hit_t, n_t, ranking_p_threshold)
        if not test.significant:
            continue
        cond_c = hit_c / nf_c
        hazard = hit_t / nf_t - cond_c
        expected = nf_t * cond_c
        diff = hit_t - expected
        pct = None if expected == 0 else 100.0 * diff / expected
        rows.append(RankRow(f.name, hit_t, expected, diff, pct, hazard, test.p_value))
    rows.sort(key=_sort_key)
    if direction == "decrease":
        rows.reverse()
    table.rows = rows
    return table
