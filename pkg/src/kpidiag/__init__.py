"""Diagnose regressions in a binary KPI between a control and a treatment dataset."""

from .bias import BiasReport, FeatureBias, NoOverlapError, NormalizedPair, bias_check, fit_propensity, match_on_bins, normalize, score
from .preprocess import EncodedFeature, PreprocessLog, encode
from .rank import RankRow, RankTable, hazard_score, rank_features
from .stats import TestResult, chi2_sf, contingency_test, percent_deviation, two_proportion_test
from .tabular import (ColumnData, ConfigError, Dataset, DatasetError, DiagnosisConfig, ForestParams,
                      ValidationReport, derive_indicator_metric, dump_dataset, load_dataset, parse_config,
                      validate)
from .workflow import (DiagnosisReport, MetricComparison, NonComparablePopulations, compare_metric, diagnose,
                       render_report, report_from_json)

__version__ = "0.1.0"

__all__ = [
    "BiasReport",
    "FeatureBias",
    "NoOverlapError",
    "NormalizedPair",
    "bias_check",
    "fit_propensity",
    "match_on_bins",
    "normalize",
    "score",
    "EncodedFeature",
    "PreprocessLog",
    "encode",
    "RankRow",
    "RankTable",
    "hazard_score",
    "rank_features",
    "TestResult",
    "chi2_sf",
    "contingency_test",
    "percent_deviation",
    "two_proportion_test",
    "ColumnData",
    "ConfigError",
    "Dataset",
    "DatasetError",
    "DiagnosisConfig",
    "ForestParams",
    "ValidationReport",
    "derive_indicator_metric",
    "dump_dataset",
    "load_dataset",
    "parse_config",
    "validate",
    "DiagnosisReport",
    "MetricComparison",
    "NonComparablePopulations",
    "compare_metric",
    "diagnose",
    "render_report",
    "report_from_json",
]
