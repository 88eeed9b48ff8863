"""Command-line entry point.

Exit status: 0 when the command ran (whatever the classification), 1 for
input or configuration errors, 2 for diagnosis-time failures such as
non-comparable populations.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

from .bias import bias_check
from .preprocess import encode
from .rank import rank_features
from .synth import SpecError, evaluate_pipeline, generate_scenario, specs_from_json
from .tabular import ConfigError, DatasetError, dump_dataset, load_dataset, parse_config, validate
from .workflow import (NonComparablePopulations, bias_markdown, compare_metric, comparison_markdown,
                       diagnose, ranking_markdown, render_report)

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2


class InputError(Exception):
    pass


def _warn(code: str, message: str) -> None:
    print(f"warning [{code}]: {message}", file=sys.stderr)


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _load_config(path: str, placeholders: bool = False):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from None
    if placeholders:
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from None
        if isinstance(doc, dict):
            doc.setdefault("target_column", "fail")
            doc.setdefault("invariant_columns", ["inv0"])
            doc.setdefault("hypothesis_columns", [])
            raw = json.dumps(doc).encode()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            config = parse_config(raw)
        except ConfigError as exc:
            raise InputError(f"config error: {exc}") from None
    for w in caught:
        _warn("config", str(w.message))
    return config


def _load_inputs(args):
    config = _load_config(args.config)
    datasets = []
    for path, name in ((args.control, "control"), (args.treatment, "treatment")):
        try:
            with open(path, "rb") as fh:
                datasets.append(load_dataset(fh, name))
        except OSError as exc:
            raise InputError(f"cannot read {name} dataset: {exc}") from None
        except (DatasetError, UnicodeDecodeError) as exc:
            raise InputError(f"{name} dataset: {exc}") from None
    control, treatment = datasets
    report = validate(config, control, treatment)
    for code, msg in report.warnings:
        _warn(code, msg)
    if report.errors:
        raise InputError("; ".join(f"{c}: {m}" for c, m in report.errors))
    return config, control, treatment


def cmd_run(args) -> int:
    config, control, treatment = _load_inputs(args)
    report = diagnose(control, treatment, config)
    for code, msg in report.warnings:
        _warn(code, msg)
    _write(args.out, render_report(report, args.format))
    raw = report.comparison_raw
    print(f"{report.classification} (delta={raw.delta:+.6f}, p={raw.test.p_value:.4g})")
    return EXIT_OK


def cmd_bias_check(args) -> int:
    config, control, treatment = _load_inputs(args)
    report = bias_check(control, treatment, config.invariant_columns, config.bias_p_threshold,
                        config.bias_deviation_threshold_pct)
    if args.format == "json":
        doc = report.to_dict()
        doc["biased_features"] = report.biased_features
        _write(args.out, json.dumps(doc, indent=2) + "\n")
    else:
        _write(args.out, bias_markdown(report) + "\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    config, control, treatment = _load_inputs(args)
    comp = compare_metric(control, treatment, config.target_column, config.metric_p_threshold)
    if args.format == "json":
        _write(args.out, json.dumps(comp.to_dict(), indent=2) + "\n")
    else:
        _write(args.out, comparison_markdown([("raw", comp)]) + "\n")
    return EXIT_OK


def cmd_rank(args) -> int:
    config, control, treatment = _load_inputs(args)
    features, log = encode(control, treatment, config)
    table = rank_features(features, control[config.target_column].values,
                          treatment[config.target_column].values, config.ranking_p_threshold,
                          config.direction)
    for code, msg in log.warnings + table.warnings:
        _warn(code, msg)
    if args.format == "json":
        doc = {"ranking": table.to_dict(), "preprocess_log": log.to_dict()}
        _write(args.out, json.dumps(doc, indent=2, allow_nan=False) + "\n")
    else:
        _write(args.out, ranking_markdown(table) + "\n")
    return EXIT_OK


def _read_specs(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read spec: {exc}") from None
    try:
        return specs_from_json(text)
    except (json.JSONDecodeError, SpecError) as exc:
        raise InputError(f"spec error: {exc}") from None


def cmd_synth(args) -> int:
    specs = _read_specs(args.spec)
    if len(specs) != 1:
        raise InputError("synth expects exactly one scenario spec")
    try:
        control, treatment, truth = generate_scenario(specs[0])
    except SpecError as exc:
        raise InputError(f"spec error: {exc}") from None
    os.makedirs(args.out_dir, exist_ok=True)
    out = Path(args.out_dir)
    _write(str(out / "control.csv"), dump_dataset(control))
    _write(str(out / "treatment.csv"), dump_dataset(treatment))
    _write(str(out / "truth.json"), json.dumps(truth.to_dict(), indent=2) + "\n")
    print(f"{truth.kind}: wrote control.csv, treatment.csv, truth.json to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    specs = _read_specs(args.specs)
    config = _load_config(args.config, placeholders=True)
    for s in specs:
        try:
            s.check()
        except SpecError as exc:
            raise InputError(f"spec error: {exc}") from None
    summary = evaluate_pipeline(specs, config, args.k)
    _write(args.out, summary.to_json() if args.format == "json" else summary.to_markdown())
    fr = "-" if summary.filter_rate is None else f"{summary.filter_rate:.3f}"
    print(f"{summary.n_scenarios} scenarios, filter_rate={fr}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kpidiag", description="Diagnose binary KPI regressions.")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_flags(p, out_required=False):
        p.add_argument("--control", required=True)
        p.add_argument("--treatment", required=True)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=out_required)
        p.add_argument("--format", choices=("json", "markdown"), default="json")

    data_flags(sub.add_parser("run", help="full diagnosis workflow"), out_required=True)
    data_flags(sub.add_parser("bias-check", help="invariant-feature bias table only"))
    data_flags(sub.add_parser("compare", help="metric comparison only"))
    data_flags(sub.add_parser("rank", help="hypothesis-feature ranking on the raw datasets"))

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("eval", help="evaluate the workflow over synthetic scenarios")
    p.add_argument("--specs", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("json", "markdown"), default="json")
    p.add_argument("--k", type=int, default=3)
    return parser


COMMANDS = {"run": cmd_run, "bias-check": cmd_bias_check, "compare": cmd_compare,
            "rank": cmd_rank, "synth": cmd_synth, "eval": cmd_eval}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NonComparablePopulations as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, RuntimeError) as exc:
        print(f"error: diagnosis failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
