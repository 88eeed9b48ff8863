"""End-to-end regression diagnosis and report rendering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .bias import BiasReport, NoOverlapError, bias_check, normalize
from .preprocess import PreprocessLog, encode
from .rank import RankTable, rank_features
from .stats import TestResult, two_proportion_test
from .tabular import Dataset, DiagnosisConfig

REPORT_VERSION = 1

NO_CHANGE = "NoChange"
TYPE_B = "TypeB"
TYPE_S = "TypeS"
INSUFFICIENT_DATA = "InsufficientData"
CLASSIFICATIONS = (NO_CHANGE, TYPE_B, TYPE_S, INSUFFICIENT_DATA)


class NonComparablePopulations(RuntimeError):
    """Matching found no overlap; the datasets cannot be compared fairly."""

    code = "non_comparable_populations"


@dataclass(frozen=True)
class MetricComparison:
    mean_c: float
    mean_t: float
    delta: float
    n_c: int
    n_t: int
    test: TestResult

    def to_dict(self) -> dict:
        return {"mean_c": self.mean_c, "mean_t": self.mean_t, "delta": self.delta,
                "n_c": self.n_c, "n_t": self.n_t, "test": self.test.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricComparison":
        return cls(d["mean_c"], d["mean_t"], d["delta"], d["n_c"], d["n_t"],
                   TestResult.from_dict(d["test"]))


def compare_metric(control: Dataset, treatment: Dataset, target: str,
                   metric_p_threshold: float = 0.05) -> MetricComparison:
    """Failure rates on each side and the chi-squared test between them.

    Rows with a null target are left out of both the rates and the test.
    """
    vc = control[target].values
    vt = treatment[target].values
    nc = int(np.count_nonzero(~np.isnan(vc)))
    nt = int(np.count_nonzero(~np.isnan(vt)))
    if nc == 0 or nt == 0:
        raise ValueError("compare_metric needs at least one non-null target row per dataset")
    fc = int(np.count_nonzero(vc == 1.0))
    ft = int(np.count_nonzero(vt == 1.0))
    test = two_proportion_test(fc, nc, ft, nt, metric_p_threshold)
    mc, mt = fc / nc, ft / nt
    return MetricComparison(mc, mt, mt - mc, nc, nt, test)


@dataclass
class DiagnosisReport:
    classification: str
    comparison_raw: MetricComparison
    config_echo: DiagnosisConfig
    comparison_normalized: MetricComparison | None = None
    bias: BiasReport | None = None
    normalization: dict | None = None
    residual_bias_warning: bool = False
    ranking: RankTable | None = None
    preprocess_log: PreprocessLog = field(default_factory=PreprocessLog)
    warnings: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "classification": self.classification,
            "comparison_raw": self.comparison_raw.to_dict(),
            "comparison_normalized": _opt(self.comparison_normalized),
            "bias": _opt(self.bias),
            "normalization": self.normalization,
            "residual_bias_warning": self.residual_bias_warning,
            "ranking": _opt(self.ranking),
            "preprocess_log": self.preprocess_log.to_dict(),
            "config_echo": self.config_echo.to_dict(),
            "warnings": [list(w) for w in self.warnings],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DiagnosisReport":
        if d.get("report_version") != REPORT_VERSION:
            raise ValueError(f"unsupported report_version {d.get('report_version')!r}")
        return cls(
            classification=d["classification"],
            comparison_raw=MetricComparison.from_dict(d["comparison_raw"]),
            config_echo=DiagnosisConfig.from_dict(d["config_echo"]),
            comparison_normalized=_opt_from(MetricComparison, d["comparison_normalized"]),
            bias=_opt_from(BiasReport, d["bias"]),
            normalization=d["normalization"],
            residual_bias_warning=d["residual_bias_warning"],
            ranking=_opt_from(RankTable, d["ranking"]),
            preprocess_log=PreprocessLog.from_dict(d["preprocess_log"]),
            warnings=[tuple(w) for w in d["warnings"]],
        )


def _opt(obj):
    return None if obj is None else obj.to_dict()


def _opt_from(cls, d):
    return None if d is None else cls.from_dict(d)


def _rank(control, treatment, config, report, control_idx=None, treatment_idx=None) -> RankTable:
    features, log = encode(control, treatment, config)
    report.preprocess_log = log
    report.warnings.extend(log.warnings)
    table = rank_features(features, control[config.target_column].values,
                          treatment[config.target_column].values, config.ranking_p_threshold,
                          config.direction, control_idx, treatment_idx)
    report.warnings.extend(table.warnings)
    return table


def diagnose(control: Dataset, treatment: Dataset, config: DiagnosisConfig) -> DiagnosisReport:
    """Classify a metric regression as NoChange, TypeB, TypeS or InsufficientData.

    A significant raw change is re-tested after propensity matching whenever the
    invariant features show population bias. If the change disappears it is
    attributed to the population (TypeB); otherwise hypothesis features are ranked
    (TypeS), on the matched rows when matching happened.

    Raises :class:`NonComparablePopulations` when matching finds no overlap.
    """
    tgt = config.target_column
    raw = compare_metric(control, treatment, tgt, config.metric_p_threshold)
    report = DiagnosisReport(NO_CHANGE, raw, config)

    if control.row_count < config.min_rows or treatment.row_count < config.min_rows:
        report.classification = INSUFFICIENT_DATA
        report.warnings.append(("insufficient_rows",
                                f"control {control.row_count} / treatment {treatment.row_count} rows; "
                                f"min_rows is {config.min_rows}"))
        return report
    if not raw.test.significant:
        return report

    report.bias = bias_check(control, treatment, config.invariant_columns,
                             config.bias_p_threshold, config.bias_deviation_threshold_pct)
    if not report.bias.any_bias:
        report.classification = TYPE_S
        report.ranking = _rank(control, treatment, config, report)
        return report

    try:
        pair = normalize(control, treatment, report.bias, config)
    except NoOverlapError as exc:
        raise NonComparablePopulations(
            "non_comparable_populations: propensity matching found no overlap") from exc
    report.normalization = pair.summary()
    report.residual_bias_warning = bool(pair.residual_bias and pair.residual_bias.any_bias)
    report.warnings.extend(pair.warnings)
    report.comparison_normalized = compare_metric(
        control.take(pair.control_idx), treatment.take(pair.treatment_idx), tgt,
        config.metric_p_threshold)
    if not report.comparison_normalized.test.significant:
        report.classification = TYPE_B
        return report
    report.classification = TYPE_S
    report.ranking = _rank(control, treatment, config, report, pair.control_idx, pair.treatment_idx)
    return report


def report_to_json(report: DiagnosisReport) -> str:
    return json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n"


def report_from_json(text: str) -> DiagnosisReport:
    return DiagnosisReport.from_dict(json.loads(text))


def _fmt(v, digits=4):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.{digits}g}"
    return str(v)


def markdown_table(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(_fmt(c) for c in r) + " |" for r in rows]
    return "\n".join(lines)


def comparison_markdown(comparisons) -> str:
    rows = [(label, c.mean_c, c.mean_t, c.delta, c.test.p_value,
             "yes" if c.test.significant else "no") for label, c in comparisons]
    return markdown_table(["Data", "Control mean", "Treatment mean", "Delta", "p-value", "Significant"],
                          rows)


def bias_markdown(bias: BiasReport) -> str:
    rows = []
    for e in bias.entries:
        for label, pc, pt in e.bins:
            rows.append((e.feature, label, f"{pc:.1f}%", f"{pt:.1f}%", f"{e.deviation_pct:.2f}%",
                         e.test.p_value, "yes" if e.biased else "no"))
    return markdown_table(["Feature", "Bin", "Occurrence in control", "Occurrence in treatment",
                           "Percent deviation", "p-value", "Biased"], rows)


def ranking_markdown(table: RankTable) -> str:
    rows = [(r.feature, r.fail_count_t, r.expected_fail_t, r.abs_diff,
             None if r.pct_diff is None else f"{r.pct_diff:.1f}%", r.hazard_score, r.p_value)
            for r in table.rows]
    return markdown_table(["Feature", "Failures (treatment)", "Expected failures", "Absolute diff",
                           "Percent diff", "Hazard score", "p-value"], rows)


_HEADLINES = {
    NO_CHANGE: "No statistically significant difference between control and treatment.",
    TYPE_B: "Regression explained by population bias (Type-B); no engineering action indicated.",
    TYPE_S: "Systemic regression (Type-S); see the ranked hypothesis features.",
    INSUFFICIENT_DATA: "Not enough data to follow up.",
}


def render_report(report: DiagnosisReport, fmt: str = "json") -> str:
    """Render as canonical JSON or as human-readable markdown."""
    if fmt == "json":
        return report_to_json(report)
    if fmt != "markdown":
        raise ValueError(f"unknown format {fmt!r}")
    out = [f"# Diagnosis: {report.classification}", "", _HEADLINES[report.classification], "",
           "## Metric comparison", ""]
    comps = [("raw", report.comparison_raw)]
    if report.comparison_normalized is not None:
        comps.append(("normalized", report.comparison_normalized))
    out += [comparison_markdown(comps), ""]
    if report.bias is not None:
        out += ["## Population bias check", "", bias_markdown(report.bias), ""]
    if report.normalization is not None:
        n = report.normalization
        out += ["## Normalization", "",
                f"Matched {n['n_pairs']} pairs on {', '.join(n['matched_on'])} "
                f"(bin width {n['bin_width']:.4g}, matched fraction {n['matched_fraction']:.3f}).", ""]
        if report.residual_bias_warning:
            out += ["Warning: population bias remains after normalization.", ""]
    if report.ranking is not None:
        out += [f"## Feature ranking ({report.ranking.direction})", ""]
        out += [ranking_markdown(report.ranking) if report.ranking.rows else "No significant features.", ""]
    if report.warnings:
        out += ["## Warnings", ""] + [f"- {c}: {m}" for c, m in report.warnings] + [""]
    return "\n".join(out)
