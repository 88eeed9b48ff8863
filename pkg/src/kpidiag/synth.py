"""Synthetic scenarios with known ground truth, same-weekday window selection,
and the false-positive-reduction evaluation harness."""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .forest import seed_stream
from .stats import two_proportion_power, two_proportion_test
from .tabular import BINARY, CATEGORICAL, ColumnData, Dataset, DiagnosisConfig
from .workflow import CLASSIFICATIONS, TYPE_S, NonComparablePopulations, diagnose

NULL, BIAS_ONLY, SYSTEMIC, MIXED = "Null", "BiasOnly", "Systemic", "Mixed"
TRUTH_KINDS = (NULL, BIAS_ONLY, SYSTEMIC, MIXED)
ERROR_COLUMN = "error"
_WEIGHT_TOL = 1e-9


class SpecError(ValueError):
    pass


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    values: tuple[str, ...]
    base_fail_rate: float
    weight_c: float
    weight_t: float


@dataclass(frozen=True)
class HypothesisSpec:
    name: str
    occurrence: tuple[float, ...]
    fail_rate_multiplier_t: float = 1.0
    null_rate: float = 0.0


@dataclass(frozen=True)
class ScenarioSpec:
    invariant_names: tuple[str, ...]
    segments: tuple[Segment, ...]
    hypothesis_specs: tuple[HypothesisSpec, ...]
    n_rows_c: int
    n_rows_t: int
    seed: int = 0
    target_name: str = "fail"

    def __post_init__(self):
        object.__setattr__(self, "invariant_names", tuple(self.invariant_names))
        object.__setattr__(self, "segments", tuple(
            s if isinstance(s, Segment) else Segment(tuple(s["values"]), s["base_fail_rate"],
                                                     s["weight_c"], s["weight_t"])
            for s in self.segments))
        object.__setattr__(self, "hypothesis_specs", tuple(
            h if isinstance(h, HypothesisSpec) else HypothesisSpec(
                h["name"], tuple(h["occurrence"]), h.get("fail_rate_multiplier_t", 1.0),
                h.get("null_rate", 0.0))
            for h in self.hypothesis_specs))

    def check(self) -> None:
        """Raise :class:`SpecError` unless weights, rates and multipliers are coherent."""
        segs = self.segments
        if not segs:
            raise SpecError("at least one segment is required")
        if self.n_rows_c < 1 or self.n_rows_t < 1:
            raise SpecError("row counts must be positive")
        for s in segs:
            if len(s.values) != len(self.invariant_names):
                raise SpecError("segment value tuples must match invariant_names")
            for r in (s.base_fail_rate, s.weight_c, s.weight_t):
                if not 0.0 <= r <= 1.0:
                    raise SpecError(f"rate {r!r} outside [0, 1]")
        for key in ("weight_c", "weight_t"):
            if abs(sum(getattr(s, key) for s in segs) - 1.0) > _WEIGHT_TOL:
                raise SpecError(f"{key} must sum to 1")
        if len({s.values for s in segs}) != len(segs):
            raise SpecError("segment value tuples must be distinct")
        names = [h.name for h in self.hypothesis_specs]
        if len(set(names)) != len(names) or set(names) & (set(self.invariant_names) | {self.target_name}):
            raise SpecError("column names must be distinct")
        for h in self.hypothesis_specs:
            if len(h.occurrence) != len(segs):
                raise SpecError(f"{h.name}: one occurrence rate per segment required")
            if not all(0.0 <= o <= 1.0 for o in h.occurrence) or not 0.0 <= h.null_rate <= 1.0:
                raise SpecError(f"{h.name}: rates must lie in [0, 1]")
            if not h.fail_rate_multiplier_t > 0:
                raise SpecError(f"{h.name}: multiplier must be positive")
        for i, s in enumerate(segs):
            worst = s.base_fail_rate
            for h in self.hypothesis_specs:
                if h.fail_rate_multiplier_t > 1 and h.occurrence[i] > 0:
                    worst *= h.fail_rate_multiplier_t
            if worst > 1.0 + 1e-12:
                raise SpecError(f"segment {s.values}: effective failure probability {worst:.3f} > 1")

    def truth(self) -> "GroundTruth":
        injected = [h.name for h in self.hypothesis_specs if h.fail_rate_multiplier_t != 1.0]
        shifted = any(abs(s.weight_c - s.weight_t) > _WEIGHT_TOL for s in self.segments)
        kind = {(False, False): NULL, (True, False): BIAS_ONLY,
                (False, True): SYSTEMIC, (True, True): MIXED}[(shifted, bool(injected))]
        return GroundTruth(kind, tuple(injected))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioSpec":
        d = dict(d)
        d.pop("truth", None)
        return cls(**d)


@dataclass(frozen=True)
class GroundTruth:
    kind: str
    injected_features: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "injected_features": list(self.injected_features)}


def _sample_side(spec: ScenarioSpec, weights: np.ndarray, n: int, treatment: bool,
                 rng: np.random.Generator) -> dict[str, np.ndarray]:
    seg = rng.choice(len(weights), size=n, p=weights / weights.sum())
    prob = np.array([s.base_fail_rate for s in spec.segments])[seg]
    hyp = {}
    for h in spec.hypothesis_specs:
        on = rng.random(n) < np.asarray(h.occurrence)[seg]
        if treatment and h.fail_rate_multiplier_t != 1.0:
            prob = np.where(on, prob * h.fail_rate_multiplier_t, prob)
        vals = on.astype(np.float64)
        if h.null_rate > 0:
            vals[rng.random(n) < h.null_rate] = np.nan
        hyp[h.name] = vals
    fail = (rng.random(n) < prob).astype(np.float64)
    return {"segment": seg, "fail": fail, **{"h:" + k: v for k, v in hyp.items()}}


def _to_dataset(spec: ScenarioSpec, name: str, draw: Mapping[str, np.ndarray]) -> Dataset:
    cols = [(spec.target_name, ColumnData(BINARY, values=draw["fail"]))]
    for j, inv in enumerate(spec.invariant_names):
        labels = sorted({s.values[j] for s in spec.segments})
        pos = {v: i for i, v in enumerate(labels)}
        seg_code = np.array([pos[s.values[j]] for s in spec.segments], dtype=np.int32)
        cols.append((inv, ColumnData(CATEGORICAL, codes=seg_code[draw["segment"]], categories=labels)))
    for h in spec.hypothesis_specs:
        cols.append((h.name, ColumnData(BINARY, values=draw["h:" + h.name])))
    return Dataset(name, cols)


def generate_scenario(spec: ScenarioSpec):
    """Sample (control, treatment, truth) deterministically from ``spec.seed``.

    Each row draws a segment by weight, hypothesis flags by per-segment
    occurrence, then failure with the segment base rate, multiplied in treatment
    by every injected feature that fires on the row.
    """
    spec.check()
    wc = np.array([s.weight_c for s in spec.segments], dtype=np.float64)
    wt = np.array([s.weight_t for s in spec.segments], dtype=np.float64)
    ctrl = _sample_side(spec, wc, spec.n_rows_c, False, seed_stream(spec.seed, 10, 0))
    trt = _sample_side(spec, wt, spec.n_rows_t, True, seed_stream(spec.seed, 10, 1))
    return (_to_dataset(spec, "control", ctrl), _to_dataset(spec, "treatment", trt), spec.truth())


def select_windows(timeseries: Dataset, date_column: str, anomaly_date, lookback_weeks: int = 4):
    """Treatment = rows on ``anomaly_date``; control = the same weekday in the prior weeks."""
    if lookback_weeks < 1:
        raise WindowError("lookback_weeks must be at least 1")
    if isinstance(anomaly_date, str):
        anomaly_date = dt.date.fromisoformat(anomaly_date)
    col = timeseries[date_column]
    try:
        parsed = {tok: dt.date.fromisoformat(tok) for tok in set(col.tokens()) if tok is not None}
    except ValueError as exc:
        raise WindowError(f"unparseable date in {date_column!r}: {exc}") from None
    prior = {anomaly_date - dt.timedelta(days=7 * k) for k in range(1, lookback_weeks + 1)}
    dates = [None if t is None else parsed[t] for t in col.tokens()]
    t_idx = [i for i, d in enumerate(dates) if d == anomaly_date]
    c_idx = [i for i, d in enumerate(dates) if d in prior]
    if not t_idx:
        raise WindowError(f"no rows on anomaly date {anomaly_date}")
    if not c_idx:
        raise WindowError(f"no rows on the {lookback_weeks} prior same-weekday dates")
    return timeseries.take(c_idx, "control"), timeseries.take(t_idx, "treatment")


def control_dates(anomaly_date: dt.date, lookback_weeks: int = 4) -> list[dt.date]:
    return [anomaly_date - dt.timedelta(days=7 * k) for k in range(1, lookback_weeks + 1)]


# --- scenario families -------------------------------------------------------

def _base_segments(rng, n_inv: int, levels: int):
    names = tuple(f"inv{j}" for j in range(n_inv))
    combos = [tuple(f"v{(i // levels ** j) % levels}" for j in range(n_inv))
              for i in range(levels ** n_inv)]
    return names, combos


def _noise_hypotheses(rng, n_seg: int, n_hyp: int, start: int = 0, null_rate: float = 0.0):
    return [HypothesisSpec(f"h{start + i}", tuple(np.round(rng.uniform(0.05, 0.6, n_seg), 4).tolist()),
                           1.0, null_rate)
            for i in range(n_hyp)]


def _normalized(w: np.ndarray) -> list[float]:
    w = w / w.sum()
    w = np.round(w, 12)
    w[-1] = 1.0 - w[:-1].sum()
    return w.tolist()


def null_spec(seed: int, n_rows: int = 10_000, n_hyp: int = 5) -> ScenarioSpec:
    """Same generator on both sides."""
    rng = seed_stream(seed, 20)
    names, combos = _base_segments(rng, 2, 3)
    w = _normalized(rng.dirichlet(np.full(len(combos), 4.0)))
    rates = np.round(rng.uniform(0.03, 0.2, len(combos)), 4)
    segs = [Segment(v, float(r), a, a) for v, r, a in zip(combos, rates, w)]
    return ScenarioSpec(names, segs, _noise_hypotheses(rng, len(combos), n_hyp), n_rows, n_rows, seed)


def _tilt_until(wc_l, rates, n_rows, min_z, step, tilted):
    """Smallest tilt strength whose expected raw gap reaches ``min_z`` standard errors."""
    for beta in np.arange(step, 5.0 + 1e-9, step):
        wt_l = _normalized(tilted(beta))
        pc, pt = float(np.dot(wc_l, rates)), float(np.dot(wt_l, rates))
        pbar = (pc + pt) / 2
        if (pt - pc) / math.sqrt(2 * pbar * (1 - pbar) / n_rows) >= min_z:
            break
    return wt_l


def bias_only_spec(seed: int, n_rows: int = 20_000, n_hyp: int = 5, min_z: float = 4.0,
                   shift: str = "marginal") -> ScenarioSpec:
    """Population shift toward high-failure segments; failure rates unchanged.

    With ``shift="marginal"`` each invariant's own distribution is tilted
    toward its higher-failure levels and segment weights are the product of
    the per-invariant marginals. ``shift="joint"`` tilts the segment weights
    directly, which can move the joint distribution while leaving a marginal
    nearly fixed. The tilt grows until the expected raw gap is ``min_z``
    standard errors.
    """
    if shift not in ("marginal", "joint"):
        raise ValueError("shift must be 'marginal' or 'joint'")
    rng = seed_stream(seed, 21)
    names, combos = _base_segments(rng, 2, 3)
    if shift == "joint":
        wc = rng.dirichlet(np.full(len(combos), 4.0))
        rates = np.round(rng.uniform(0.03, 0.25, len(combos)), 4)
        centred = (rates - rates.mean()) / rates.std()
        wc_l = _normalized(wc)
        wt_l = _tilt_until(wc_l, rates, n_rows, min_z, 0.1,
                           lambda beta: np.asarray(wc_l) * np.exp(beta * centred))
    else:
        level = np.array([[int(v[1:]) for v in c] for c in combos])
        margins = [rng.dirichlet(np.full(3, 4.0)) for _ in names]
        rates = np.round(rng.uniform(0.03, 0.25, len(combos)), 4)

        def product(ms):
            return np.prod([m[level[:, j]] for j, m in enumerate(ms)], axis=0)

        wc = product(margins)
        scores = []
        for j in range(len(names)):
            mean_rate = np.array([np.dot(wc[level[:, j] == v], rates[level[:, j] == v])
                                  / wc[level[:, j] == v].sum() for v in range(3)])
            scores.append((mean_rate - mean_rate.mean()) / (mean_rate.std() or 1.0))
        wc_l = _normalized(wc)
        wt_l = _tilt_until(wc_l, rates, n_rows, min_z, 0.05, lambda beta: product(
            [m * np.exp(beta * s) / np.dot(m, np.exp(beta * s)) for m, s in zip(margins, scores)]))
    segs = [Segment(v, float(r), a, b) for v, r, a, b in zip(combos, rates, wc_l, wt_l)]
    return ScenarioSpec(names, segs, _noise_hypotheses(rng, len(combos), n_hyp), n_rows, n_rows, seed)


def systemic_spec(seed: int, n_rows: int = 20_000, n_hyp: int = 5,
                  multiplier: tuple[float, float] = (2.0, 3.0),
                  occurrence: tuple[float, float] = (0.15, 0.3)) -> ScenarioSpec:
    """Equal weights; one injected feature raises the treatment failure rate."""
    rng = seed_stream(seed, 22)
    names, combos = _base_segments(rng, 2, 3)
    w = _normalized(rng.dirichlet(np.full(len(combos), 4.0)))
    rates = np.round(rng.uniform(0.08, 0.2, len(combos)), 4)
    segs = [Segment(v, float(r), a, a) for v, r, a in zip(combos, rates, w)]
    hyps = _noise_hypotheses(rng, len(combos), n_hyp)
    mult = round(float(rng.uniform(*multiplier)), 4)
    occ = tuple(np.round(rng.uniform(*occurrence, len(combos)), 4).tolist())
    slot = int(rng.integers(0, n_hyp + 1))
    hyps.insert(slot, HypothesisSpec("injected", occ, mult))
    return ScenarioSpec(names, segs, hyps, n_rows, n_rows, seed)


def scale_spec(seed: int = 0, n_rows: int = 100_000, n_inv: int = 10, n_hyp: int = 200) -> ScenarioSpec:
    """Large mixed scenario: many invariants and hypothesis columns, bias plus one injected cause."""
    rng = seed_stream(seed, 23)
    names = tuple(f"inv{j}" for j in range(n_inv))
    n_seg = 60
    combos = sorted({tuple(f"v{x}" for x in rng.integers(0, 3, n_inv)) for _ in range(n_seg)})
    k = len(combos)
    wc = rng.dirichlet(np.full(k, 3.0))
    rates = np.round(rng.uniform(0.03, 0.15, k), 4)
    wc_l = _normalized(wc)
    wt_l = _normalized(wc * np.exp(0.5 * (rates - rates.mean()) / rates.std()))
    segs = [Segment(v, float(r), a, b) for v, r, a, b in zip(combos, rates, wc_l, wt_l)]
    hyps = _noise_hypotheses(rng, k, n_hyp - 1, null_rate=0.02)
    hyps.insert(17, HypothesisSpec("injected", tuple([0.2] * k), 2.0))
    return ScenarioSpec(names, segs, hyps, n_rows, n_rows, seed)


def paperlike_specs(n_scenarios: int, seed: int = 0, n_rows: int = 10_000) -> list[ScenarioSpec]:
    """90% population-only or null scenarios, 10% systemic ones."""
    rng = seed_stream(seed, 24)
    n_sys = int(round(0.1 * n_scenarios))
    kinds = [SYSTEMIC] * n_sys + [BIAS_ONLY, NULL] * ((n_scenarios - n_sys) // 2 + 1)
    kinds = kinds[:n_scenarios]
    order = rng.permutation(n_scenarios)
    seeds = rng.integers(0, 2**63, size=n_scenarios)
    make = {NULL: null_spec, BIAS_ONLY: bias_only_spec, SYSTEMIC: systemic_spec}
    return [make[kinds[i]](int(seeds[j]), n_rows) for j, i in enumerate(order)]


PROFILES = {"paperlike": paperlike_specs}


def specs_from_json(doc) -> list[ScenarioSpec]:
    """Accept a single spec, a list of specs, or ``{"profile": name, ...}``."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    if isinstance(doc, dict) and "profile" in doc:
        name = doc["profile"]
        if name not in PROFILES:
            raise SpecError(f"unknown profile {name!r}")
        return PROFILES[name](int(doc.get("n_scenarios", 100)), int(doc.get("seed", 0)),
                              int(doc.get("n_rows", 10_000)))
    if isinstance(doc, dict):
        doc = [doc]
    try:
        return [ScenarioSpec.from_dict(d) for d in doc]
    except (TypeError, KeyError) as exc:
        raise SpecError(f"malformed scenario spec: {exc}") from None


# --- evaluation ----------------------------------------------------------------

@dataclass
class EvalSummary:
    n_scenarios: int
    confusion: dict[str, dict[str, int]]
    filter_rate: float | None
    top_k_hit_rate: float | None
    top1_hit_rate: float | None
    k: int = 3
    records: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_markdown(self) -> str:
        cols = list(CLASSIFICATIONS) + [ERROR_COLUMN]
        lines = ["| Truth | " + " | ".join(cols) + " |", "|---|" + "---|" * len(cols)]
        for kind in TRUTH_KINDS:
            row = self.confusion[kind]
            if sum(row.values()):
                lines.append(f"| {kind} | " + " | ".join(str(row[c]) for c in cols) + " |")
        fmt = lambda v: "-" if v is None else f"{v:.3f}"
        lines += ["", f"Scenarios: {self.n_scenarios}",
                  f"Filter rate (Null + BiasOnly not TypeS): {fmt(self.filter_rate)}",
                  f"Top-{self.k} hit rate (Systemic): {fmt(self.top_k_hit_rate)}",
                  f"Top-1 hit rate (Systemic): {fmt(self.top1_hit_rate)}"]
        return "\n".join(lines) + "\n"


def injected_rank(report, injected: Sequence[str]) -> int | None:
    """1-based position of the first ranked feature derived from an injected column."""
    if report.ranking is None:
        return None
    for pos, row in enumerate(report.ranking.rows, start=1):
        for name in injected:
            if row.feature.startswith(name + "=") or row.feature == name + ".is_null":
                return pos
    return None


def scenario_config(spec: ScenarioSpec, config: DiagnosisConfig) -> DiagnosisConfig:
    return dataclasses.replace(config, target_column=spec.target_name,
                               invariant_columns=spec.invariant_names,
                               hypothesis_columns=tuple(h.name for h in spec.hypothesis_specs))


def run_scenario(spec: ScenarioSpec, config: DiagnosisConfig) -> dict:
    control, treatment, truth = generate_scenario(spec)
    cfg = scenario_config(spec, config)
    rec = {"seed": spec.seed, "truth": truth.kind, "classification": ERROR_COLUMN,
           "raw_significant": None, "normalized_significant": None, "injected_rank": None}
    try:
        report = diagnose(control, treatment, cfg)
    except NonComparablePopulations:
        return rec
    rec["classification"] = report.classification
    rec["raw_significant"] = report.comparison_raw.test.significant
    if report.comparison_normalized is not None:
        rec["normalized_significant"] = report.comparison_normalized.test.significant
    rec["injected_rank"] = injected_rank(report, truth.injected_features)
    return rec


def evaluate_pipeline(specs: Sequence[ScenarioSpec], config: DiagnosisConfig, k: int = 3) -> EvalSummary:
    """Diagnose each scenario and tabulate outcomes against ground truth.

    Column lists in ``config`` are replaced per scenario by the scenario's own names;
    every other setting applies unchanged.
    """
    if not specs:
        raise ValueError("at least one scenario is required")
    records = [run_scenario(s, config) for s in specs]
    confusion = {t: {c: 0 for c in (*CLASSIFICATIONS, ERROR_COLUMN)} for t in TRUTH_KINDS}
    for r in records:
        confusion[r["truth"]][r["classification"]] += 1
    benign = [r for r in records if r["truth"] in (NULL, BIAS_ONLY)]
    systemic = [r for r in records if r["truth"] == SYSTEMIC]
    filt = (sum(r["classification"] != TYPE_S for r in benign) / len(benign)) if benign else None

    def hit(r, top):
        return r["classification"] == TYPE_S and r["injected_rank"] is not None and r["injected_rank"] <= top

    topk = sum(hit(r, k) for r in systemic) / len(systemic) if systemic else None
    top1 = sum(hit(r, 1) for r in systemic) / len(systemic) if systemic else None
    return EvalSummary(len(records), confusion, filt, topk, top1, k, records)


# --- power ---------------------------------------------------------------------

def empirical_power(p_c: float, p_t: float, n: int, n_sims: int = 500, seed: int = 0,
                    alpha: float = 0.05) -> float:
    """Fraction of simulated (n, n) samples where the two-proportion test rejects."""
    rng = seed_stream(seed, 30)
    hits_c = rng.binomial(n, p_c, size=n_sims)
    hits_t = rng.binomial(n, p_t, size=n_sims)
    return float(np.mean([two_proportion_test(int(a), n, int(b), n, alpha).significant
                          for a, b in zip(hits_c, hits_t)]))


def power_report(p_c: float = 0.05, p_t: float = 0.055, n: int = 100_000, n_sims: int = 500,
                 seed: int = 0, alpha: float = 0.05) -> dict:
    """Empirical vs analytic power, plus both readings of a "1% regression" at this n."""
    return {
        "p_c": p_c, "p_t": p_t, "n_per_side": n, "n_sims": n_sims, "alpha": alpha,
        "empirical_power": empirical_power(p_c, p_t, n, n_sims, seed, alpha),
        "analytic_power": two_proportion_power(p_c, p_t, n, n, alpha),
        "analytic_power_1pct_absolute": two_proportion_power(p_c, p_c + 0.01, n, n, alpha),
        "analytic_power_1pct_relative": two_proportion_power(p_c, p_c * 1.01, n, n, alpha),
    }
