"""Columnar datasets, CSV ingestion, diagnosis configuration and input validation."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

CATEGORICAL = "categorical"
NUMERIC = "numeric"
BINARY = "binary"
KINDS = (CATEGORICAL, NUMERIC, BINARY)

_BINARY_TOKENS = {"": None, "0": 0.0, "1": 1.0, "false": 0.0, "true": 1.0}

MAX_INVARIANT_COLUMNS = 10
MAX_HYPOTHESIS_COLUMNS = 200


class DatasetError(ValueError):
    """Raised for malformed CSV input or inconsistent columns."""


class ConfigError(ValueError):
    """Raised when a configuration document is missing keys or out of range."""


class ConfigWarning(UserWarning):
    pass


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


class ColumnData:
    """One typed, null-aware column.

    Numeric and binary columns keep float64 values with NaN as the null marker.
    Categorical columns keep integer codes into ``categories`` with -1 for null.
    """

    __slots__ = ("kind", "values", "codes", "categories")

    def __init__(self, kind, values=None, codes=None, categories=None):
        if kind not in KINDS:
            raise DatasetError(f"unknown column kind {kind!r}")
        self.kind = kind
        if kind == CATEGORICAL:
            self.values = None
            self.codes = _frozen(np.asarray(codes, dtype=np.int32))
            self.categories = tuple(categories)
        else:
            vals = np.asarray(values, dtype=np.float64)
            finite = vals[~np.isnan(vals)]
            if np.isinf(finite).any():
                raise DatasetError("numeric values must be finite or null")
            if kind == BINARY and not np.isin(finite, (0.0, 1.0)).all():
                raise DatasetError("binary column holds values outside {0, 1}")
            self.values = _frozen(vals)
            self.codes = None
            self.categories = None

    @classmethod
    def categorical(cls, tokens: Iterable[str | None]) -> "ColumnData":
        tokens = list(tokens)
        cats = sorted({t for t in tokens if t is not None})
        index = {c: i for i, c in enumerate(cats)}
        codes = np.fromiter((-1 if t is None else index[t] for t in tokens),
                            dtype=np.int32, count=len(tokens))
        return cls(CATEGORICAL, codes=codes, categories=cats)

    @classmethod
    def numeric(cls, values) -> "ColumnData":
        return cls(NUMERIC, values=_nullable_floats(values))

    @classmethod
    def binary(cls, values) -> "ColumnData":
        return cls(BINARY, values=_nullable_floats(values))

    def __len__(self) -> int:
        return len(self.codes if self.kind == CATEGORICAL else self.values)

    def null_mask(self) -> np.ndarray:
        if self.kind == CATEGORICAL:
            return self.codes < 0
        return np.isnan(self.values)

    def tokens(self) -> list[str | None]:
        """Values as text labels (None for null); binary and numeric are stringified."""
        if self.kind == CATEGORICAL:
            cats = self.categories
            return [None if c < 0 else cats[c] for c in self.codes.tolist()]
        if self.kind == BINARY:
            return [None if math.isnan(v) else str(int(v)) for v in self.values.tolist()]
        return [None if math.isnan(v) else repr(v) for v in self.values.tolist()]

    def take(self, idx) -> "ColumnData":
        idx = np.asarray(idx, dtype=np.int64)
        if self.kind == CATEGORICAL:
            return ColumnData(CATEGORICAL, codes=self.codes[idx], categories=self.categories)
        return ColumnData(self.kind, values=self.values[idx])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ColumnData):
            return NotImplemented
        if self.kind != other.kind or len(self) != len(other):
            return False
        if self.kind == CATEGORICAL:
            return self.tokens() == other.tokens()
        a, b = self.values, other.values
        return bool(np.array_equal(np.isnan(a), np.isnan(b))
                    and np.array_equal(a[~np.isnan(a)], b[~np.isnan(b)]))

    def __repr__(self) -> str:
        return f"ColumnData({self.kind}, n={len(self)}, nulls={int(self.null_mask().sum())})"


def _nullable_floats(values) -> np.ndarray:
    if isinstance(values, np.ndarray) and values.dtype.kind == "f":
        return values.astype(np.float64, copy=False)
    return np.array([np.nan if v is None else float(v) for v in values], dtype=np.float64)


class Dataset:
    """Immutable table of samples: ordered, uniquely named, equal-length columns."""

    __slots__ = ("name", "_columns", "row_count")

    def __init__(self, name: str, columns: Mapping[str, ColumnData] | Sequence[tuple[str, ColumnData]]):
        items = list(columns.items()) if isinstance(columns, Mapping) else list(columns)
        names = [n for n, _ in items]
        if len(set(names)) != len(names):
            raise DatasetError("column names must be unique")
        lengths = {len(c) for _, c in items}
        if len(lengths) > 1:
            raise DatasetError(f"columns have unequal lengths {sorted(lengths)}")
        self.name = name
        self._columns = dict(items)
        self.row_count = lengths.pop() if lengths else 0

    @property
    def column_names(self) -> list[str]:
        return list(self._columns)

    @property
    def columns(self) -> list[tuple[str, ColumnData]]:
        return list(self._columns.items())

    def __contains__(self, name: str) -> bool:
        return name in self._columns

    def __getitem__(self, name: str) -> ColumnData:
        return self._columns[name]

    def __len__(self) -> int:
        return self.row_count

    def take(self, idx, name: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(name or self.name, [(n, c.take(idx)) for n, c in self._columns.items()])

    def with_column(self, name: str, column: ColumnData) -> "Dataset":
        if name in self._columns:
            raise DatasetError(f"column {name!r} already exists")
        return Dataset(self.name, self.columns + [(name, column)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.name == other.name and self.column_names == other.column_names
                and all(self[n] == other[n] for n in self.column_names))

    def __repr__(self) -> str:
        kinds = ", ".join(f"{n}:{c.kind}" for n, c in self._columns.items())
        return f"Dataset({self.name!r}, rows={self.row_count}, [{kinds}])"


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data


def _infer_column(raw: Sequence[str]) -> ColumnData:
    arr = np.asarray(raw, dtype=str) if len(raw) else np.zeros(0, dtype=str)
    uniq, inv = np.unique(arr, return_inverse=True)
    inv = inv.reshape(-1)
    labels = uniq.tolist()
    lowered = [t.lower() for t in labels]
    if set(lowered) <= _BINARY_TOKENS.keys():
        table = np.array([np.nan if _BINARY_TOKENS[t] is None else _BINARY_TOKENS[t] for t in lowered],
                         dtype=np.float64)
        return ColumnData(BINARY, values=table[inv] if len(table) else np.zeros(0))
    parsed = []
    for t in labels:
        if t == "":
            parsed.append(np.nan)
            continue
        try:
            v = float(t)
        except ValueError:
            break
        if not math.isfinite(v):
            break
        parsed.append(v)
    else:
        return ColumnData(NUMERIC, values=np.array(parsed, dtype=np.float64)[inv])
    # np.unique sorts by code point, matching Python's str ordering
    has_empty = bool(labels) and labels[0] == ""
    cats = labels[1:] if has_empty else labels
    remap = np.arange(len(labels), dtype=np.int32) - int(has_empty)
    return ColumnData(CATEGORICAL, codes=remap[inv], categories=cats)


def load_dataset(source, name: str) -> Dataset:
    """Parse a headed UTF-8 CSV into a Dataset, inferring one kind per column.

    Binary detection runs first (tokens within {0, 1, true, false, ""}), then
    numeric (every non-empty token parses to a finite float); anything else is
    categorical. The empty string is the only null marker.
    """
    reader = csv.reader(io.StringIO(_read_text(source), newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("CSV input is empty; a header row is required") from None
    except csv.Error as exc:
        raise DatasetError(f"line 1: {exc}") from None
    seen = set()
    for h in header:
        if h in seen:
            raise DatasetError(f"line 1: duplicate header {h!r}")
        seen.add(h)
    width = len(header)
    rows = []
    try:
        for row in reader:
            if len(row) != width:
                if not row:
                    continue
                raise DatasetError(
                    f"line {reader.line_num}: expected {width} fields, found {len(row)}")
            rows.append(row)
    except csv.Error as exc:
        raise DatasetError(f"line {reader.line_num}: {exc}") from None
    cols = list(zip(*rows)) if rows else [() for _ in header]
    return Dataset(name, [(h, _infer_column(c)) for h, c in zip(header, cols)])


def dump_dataset(dataset: Dataset) -> str:
    """Serialize to CSV text that ``load_dataset`` reads back as an equal Dataset."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(dataset.column_names)
    cols = [["" if t is None else t for t in c.tokens()] for _, c in dataset.columns]
    writer.writerows(zip(*cols))
    return buf.getvalue()


def derive_indicator_metric(dataset: Dataset, source_column: str, lower: float, upper: float,
                            target_name: str) -> Dataset:
    """Add a binary column that is 1 where ``lower <= value < upper``; nulls stay null."""
    col = dataset[source_column]
    if col.kind == CATEGORICAL:
        raise DatasetError(f"column {source_column!r} is not numeric")
    if target_name in dataset:
        raise DatasetError(f"column {target_name!r} already exists")
    v = col.values
    with np.errstate(invalid="ignore"):
        ind = ((v >= lower) & (v < upper)).astype(np.float64)
    ind[np.isnan(v)] = np.nan
    return dataset.with_column(target_name, ColumnData(BINARY, values=ind))


def as_categorical(col: ColumnData) -> ColumnData:
    """View any column as categorical; binary and numeric values become text labels."""
    if col.kind == CATEGORICAL:
        return col
    v = col.values
    ok = ~np.isnan(v)
    uniq, inv = np.unique(v[ok], return_inverse=True)
    if col.kind == BINARY:
        labels = [str(int(u)) for u in uniq.tolist()]
    else:
        labels = [repr(u) for u in uniq.tolist()]
    order = sorted(range(len(labels)), key=labels.__getitem__)
    rank = np.empty(len(labels), dtype=np.int32)
    rank[order] = np.arange(len(labels), dtype=np.int32)
    codes = np.full(len(v), -1, dtype=np.int32)
    codes[ok] = rank[inv.reshape(-1)]
    return ColumnData(CATEGORICAL, codes=codes, categories=[labels[i] for i in order])


def align_categories(*columns: ColumnData) -> tuple[tuple[str, ...], list[np.ndarray]]:
    """Re-code several columns onto one sorted label set (nulls stay -1)."""
    cols = [as_categorical(c) for c in columns]
    union = sorted(set().union(*(set(c.categories) for c in cols)))
    pos = {c: i for i, c in enumerate(union)}
    out = []
    for col in cols:
        remap = np.array([pos[c] for c in col.categories] + [-1], dtype=np.int32)
        out.append(remap[col.codes])  # code -1 picks the trailing null slot
    return tuple(union), out


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 32
    max_depth: int = 8
    min_leaf: int = 50

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"forest.{f.name} must be a positive integer, got {v!r}")


@dataclass(frozen=True)
class DiagnosisConfig:
    target_column: str
    invariant_columns: tuple[str, ...]
    hypothesis_columns: tuple[str, ...]
    metric_p_threshold: float = 0.05
    bias_p_threshold: float = 0.05
    bias_deviation_threshold_pct: float = 2.0
    ranking_p_threshold: float = 0.05
    max_bins: int = 10
    numeric_hypothesis_bins: int = 4
    prune_p_threshold: float = 0.95
    add_is_null: bool = True
    caliper_coefficient: float = 0.2
    forest: ForestParams = field(default_factory=ForestParams)
    min_rows: int = 1000
    min_matched_fraction: float = 0.5
    direction: str = "increase"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "invariant_columns", tuple(self.invariant_columns))
        object.__setattr__(self, "hypothesis_columns", tuple(self.hypothesis_columns))
        if isinstance(self.forest, Mapping):
            object.__setattr__(self, "forest", ForestParams(**self.forest))
        self._check()

    def _check(self):
        if not isinstance(self.target_column, str) or not self.target_column:
            raise ConfigError("target_column must be a non-empty string")
        for key in ("invariant_columns", "hypothesis_columns"):
            if not all(isinstance(c, str) for c in getattr(self, key)):
                raise ConfigError(f"{key} must be a list of strings")
        if not self.invariant_columns:
            raise ConfigError("invariant_columns must not be empty")
        inv, hyp = set(self.invariant_columns), set(self.hypothesis_columns)
        if len(inv) != len(self.invariant_columns) or len(hyp) != len(self.hypothesis_columns):
            raise ConfigError("column lists must not repeat names")
        tgt = {self.target_column}
        if tgt & inv or tgt & hyp or inv & hyp:
            raise ConfigError("target_column, invariant_columns and hypothesis_columns must be disjoint")
        open_unit = ("metric_p_threshold", "bias_p_threshold", "ranking_p_threshold")
        for key in open_unit:
            v = getattr(self, key)
            if not _is_real(v) or not 0.0 < v < 1.0:
                raise ConfigError(f"{key} must lie in (0, 1), got {v!r}")
        if not _is_real(self.prune_p_threshold) or not 0.0 < self.prune_p_threshold <= 1.0:
            raise ConfigError(f"prune_p_threshold must lie in (0, 1], got {self.prune_p_threshold!r}")
        if not _is_real(self.min_matched_fraction) or not 0.0 < self.min_matched_fraction <= 1.0:
            raise ConfigError("min_matched_fraction must lie in (0, 1]")
        if not _is_real(self.bias_deviation_threshold_pct) or not 0.0 <= self.bias_deviation_threshold_pct <= 100.0:
            raise ConfigError("bias_deviation_threshold_pct must lie in [0, 100]")
        if not _is_real(self.caliper_coefficient) or not self.caliper_coefficient > 0:
            raise ConfigError("caliper_coefficient must be positive")
        if _int_or_none(self.max_bins) is None or self.max_bins < 2:
            raise ConfigError("max_bins must be an integer >= 2")
        if _int_or_none(self.numeric_hypothesis_bins) is None or self.numeric_hypothesis_bins < 2:
            raise ConfigError("numeric_hypothesis_bins must be an integer >= 2")
        if _int_or_none(self.min_rows) is None or self.min_rows < 1:
            raise ConfigError("min_rows must be a positive integer")
        if not isinstance(self.add_is_null, bool):
            raise ConfigError("add_is_null must be a boolean")
        if self.direction not in ("increase", "decrease"):
            raise ConfigError("direction must be 'increase' or 'decrease'")
        if _int_or_none(self.seed) is None or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["invariant_columns"] = list(self.invariant_columns)
        d["hypothesis_columns"] = list(self.hypothesis_columns)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "DiagnosisConfig":
        return cls(**d)


def _is_real(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _int_or_none(v):
    return v if isinstance(v, int) and not isinstance(v, bool) else None


_REQUIRED_KEYS = ("target_column", "invariant_columns", "hypothesis_columns")
_CONFIG_KEYS = {f.name for f in fields(DiagnosisConfig)}
_FOREST_KEYS = {f.name for f in fields(ForestParams)}


def parse_config(source) -> DiagnosisConfig:
    """Read a JSON configuration document; absent optional keys take defaults.

    Unknown keys are reported through :class:`ConfigWarning` and ignored.
    """
    try:
        doc = json.loads(_read_text(source))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for key in _REQUIRED_KEYS:
        if key not in doc:
            raise ConfigError(f"missing required config key {key!r}")
    for key in sorted(set(doc) - _CONFIG_KEYS):
        warnings.warn(f"unknown config key {key!r} ignored", ConfigWarning, stacklevel=2)
    kwargs = {k: v for k, v in doc.items() if k in _CONFIG_KEYS}
    forest = kwargs.pop("forest", None) or {}
    if not isinstance(forest, dict):
        raise ConfigError("forest must be a JSON object")
    for key in sorted(set(forest) - _FOREST_KEYS):
        warnings.warn(f"unknown forest key {key!r} ignored", ConfigWarning, stacklevel=2)
    kwargs["forest"] = ForestParams(**{k: v for k, v in forest.items() if k in _FOREST_KEYS})
    try:
        return DiagnosisConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class ValidationReport:
    errors: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> list[str]:
        return [c for c, _ in self.errors]

    def warning_codes(self) -> list[str]:
        return [c for c, _ in self.warnings]


def validate(config: DiagnosisConfig, control: Dataset, treatment: Dataset) -> ValidationReport:
    """Check that the datasets carry every configured column with a supported kind."""
    report = ValidationReport()
    named = [config.target_column, *config.invariant_columns, *config.hypothesis_columns]
    for ds in (control, treatment):
        for col in named:
            if col not in ds:
                report.errors.append(
                    ("missing_column", f"column {col!r} is absent from dataset {ds.name!r}"))
    for ds in (control, treatment):
        if config.target_column in ds and ds[config.target_column].kind != BINARY:
            report.errors.append(
                ("target_not_binary", f"target {config.target_column!r} in {ds.name!r} is "
                                      f"{ds[config.target_column].kind}, expected binary"))
        for col in config.invariant_columns:
            if col in ds and ds[col].kind != CATEGORICAL:
                report.errors.append(
                    ("invariant_not_categorical",
                     f"invariant {col!r} in {ds.name!r} is {ds[col].kind}, expected categorical"))
    for ds in (control, treatment):
        if ds.row_count < config.min_rows:
            report.warnings.append(
                ("insufficient_rows", f"dataset {ds.name!r} has {ds.row_count} rows "
                                      f"(< min_rows {config.min_rows})"))
    if len(config.invariant_columns) > MAX_INVARIANT_COLUMNS:
        report.warnings.append(
            ("too_many_invariants", f"{len(config.invariant_columns)} invariant columns "
                                    f"(guidance: at most {MAX_INVARIANT_COLUMNS})"))
    if len(config.hypothesis_columns) > MAX_HYPOTHESIS_COLUMNS:
        report.warnings.append(
            ("too_many_hypotheses", f"{len(config.hypothesis_columns)} hypothesis columns "
                                    f"(guidance: at most {MAX_HYPOTHESIS_COLUMNS})"))
    return report
