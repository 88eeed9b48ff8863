from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpidiag.preprocess import (NULL_SUFFIX, OTHER, PreprocessLog, bin_tail, binarize_numeric, drop_constant,
                                encode, informativeness_p, prune_uninformative)
from kpidiag.stats import contingency_test
from kpidiag.tabular import CATEGORICAL, ColumnData, Dataset, DiagnosisConfig

from conftest import make_dataset
from oracles import reference_encode


def cat(values):
    return ColumnData.categorical(values)


def counts(col):
    return Counter(t for t in col.tokens() if t is not None)


def test_drop_constant_examples():
    c = make_dataset(x=["x"] * 4, y=["x"] * 4, z=[None, None, None, None], w=[1.5, 1.5, None, 1.5])
    t = make_dataset(x=["x"] * 3, y=["y"] * 3, z=[None, None, None], w=[1.5, 1.5, 1.5])
    kept, dropped = drop_constant(["x", "y", "z", "w"], c, t)
    assert kept == ["y", "w"]
    assert dropped == ["x", "z"]


def test_bin_tail_under_capacity():
    col = cat(["a", "b", "c", "a"])
    assert bin_tail(col, 10) == col


def test_bin_tail_frequency_order():
    vals = ["a"] * 50 + ["b"] * 30 + ["c"] * 10 + ["d"] * 5 + ["e"] * 5
    out = bin_tail(cat(vals), 4)
    assert counts(out) == {"a": 50, "b": 30, "c": 10, OTHER: 10}


def test_bin_tail_lexicographic_tie():
    out = bin_tail(cat(["b"] * 10 + ["a"] * 10), 2)
    assert counts(out) == {"a": 10, OTHER: 10}


def test_bin_tail_leaves_nulls():
    out = bin_tail(cat(["a", "b", "c", None]), 2)
    assert out.tokens()[3] is None


def test_bin_tail_rejects_small_max_bins():
    with pytest.raises(ValueError):
        bin_tail(cat(["a"]), 1)


def test_binarize_uniform_quartiles():
    out = binarize_numeric(ColumnData.numeric(np.arange(1, 101, dtype=float)), 4)
    assert counts(out) == {"q1": 25, "q2": 25, "q3": 25, "q4": 25}
    assert out.tokens()[24] == "q1" and out.tokens()[25] == "q2"


def test_binarize_merged_edges():
    out = binarize_numeric(ColumnData.numeric([1, 1, 1, 1, 2]), 4)
    assert counts(out) == {"q1": 4, "q2": 1}


def test_binarize_constant_and_null():
    assert counts(binarize_numeric(ColumnData.numeric([3.0, 3.0, 3.0]), 4)) == {"q1": 3}
    out = binarize_numeric(ColumnData.numeric([None, None]), 4)
    assert out.kind == CATEGORICAL and out.tokens() == [None, None]
    mixed = binarize_numeric(ColumnData.numeric([1.0, None, 2.0]), 2)
    assert mixed.tokens()[1] is None


def test_prune_examples():
    rng = np.random.default_rng(3)
    n = 1000
    # identical failure rate in every bin
    indep = cat(["a", "b"] * (n // 2))
    target = np.array([0, 0, 1, 1] * (n // 4), dtype=float)
    assert informativeness_p(indep, target) == pytest.approx(1.0)
    # failure rate 0.5 in bin "a", 0 elsewhere
    labels = rng.choice(["a", "b", "c"], n)
    fail = np.where(labels == "a", rng.integers(0, 2, n), 0).astype(float)
    informative = cat(labels.tolist())
    table = [[int(((labels == b) & (fail == 0)).sum()), int(((labels == b) & (fail == 1)).sum())] for b in "abc"]
    ref = contingency_test(table, 0.05).p_value
    assert informativeness_p(informative, fail) == pytest.approx(ref, rel=1e-12)
    feats = {"indep": indep, "inf": informative}
    kept, dropped = prune_uninformative(feats, np.where(np.arange(n) % 4 < 2, 0.0, 1.0), 0.95)
    assert "indep" in [d for d, _ in dropped]
    kept, dropped = prune_uninformative(feats, fail, 1.0)
    assert dropped == [] and kept == ["indep", "inf"]


def test_encode_categorical_no_nulls():
    c = make_dataset(fail=[0, 1, 0, 1], f=["a", "a", "b", "b"])
    t = make_dataset(fail=[0, 1, 1, 1], f=["a", "b", "b", "b"])
    cfg = DiagnosisConfig("fail", ("inv",), ("f",), prune_p_threshold=1.0)
    feats, log = encode(c, t, cfg)
    assert [f.name for f in feats] == ["f=a", "f=b"]
    assert feats[0].values_c.tolist() == [True, True, False, False]
    assert feats[1].values_t.tolist() == [False, True, True, True]


def test_encode_is_null_and_warning():
    c = make_dataset(fail=[0, 1, 0, 1], f=["a", None, "b", "b"])
    t = make_dataset(fail=[0, 1, 1, 1], f=["a", "b", "b", "b"])
    cfg = DiagnosisConfig("fail", ("inv",), ("f",), prune_p_threshold=1.0)
    feats, log = encode(c, t, cfg)
    assert [f.name for f in feats] == ["f=a", "f=b", "f" + NULL_SUFFIX]
    assert feats[-1].values_c.tolist() == [False, True, False, False]
    assert log.warnings == []
    feats, log = encode(c, t, DiagnosisConfig("fail", ("inv",), ("f",), prune_p_threshold=1.0,
                                              add_is_null=False))
    assert [f.name for f in feats] == ["f=a", "f=b"]
    assert [w[0] for w in log.warnings] == ["is_null_excluded"]


def test_encode_constant_column_logged():
    c = make_dataset(fail=[0, 1], k=["x", "x"], f=["a", "b"])
    t = make_dataset(fail=[1, 1], k=["x", "x"], f=["b", "b"])
    feats, log = encode(c, t, DiagnosisConfig("fail", ("inv",), ("k", "f"), prune_p_threshold=1.0))
    assert log.dropped_constant == ["k"]
    assert all(f.source != "k" for f in feats)


def test_encode_no_survivors_warns():
    c = make_dataset(fail=[0, 1], k=["x", "x"])
    feats, log = encode(c, c, DiagnosisConfig("fail", ("inv",), ("k",)))
    assert feats == []
    assert [w[0] for w in log.warnings] == ["no_surviving_features"]


def test_log_round_trip():
    log = PreprocessLog(["a"], [("b", 0.99)], [("c", 9, 12)], [("w", "msg")])
    assert PreprocessLog.from_dict(log.to_dict()) == log


@st.composite
def tables(draw):
    n_c = draw(st.integers(1, 60))
    n_t = draw(st.integers(1, 60))
    n_cols = draw(st.integers(1, 4))
    alphabet = draw(st.sampled_from(["ab", "abc", "abcdefg", "abcdefghijkl"]))
    value = st.one_of(st.sampled_from(list(alphabet)), st.none()) if draw(st.booleans()) \
        else st.sampled_from(list(alphabet))
    rows_c, rows_t = {}, {}
    for j in range(n_cols):
        rows_c[f"h{j}"] = draw(st.lists(value, min_size=n_c, max_size=n_c))
        rows_t[f"h{j}"] = draw(st.lists(value, min_size=n_t, max_size=n_t))
    fail_c = draw(st.lists(st.integers(0, 1), min_size=n_c, max_size=n_c))
    fail_t = draw(st.lists(st.integers(0, 1), min_size=n_t, max_size=n_t))
    max_bins = draw(st.integers(2, 6))
    thr = draw(st.sampled_from([0.05, 0.5, 0.95, 1.0]))
    return rows_c, rows_t, fail_c, fail_t, max_bins, thr, draw(st.booleans())


def _categorical_dataset(name, rows, fail):
    cols = [("fail", ColumnData.binary(fail))]
    cols += [(k, ColumnData.categorical(v)) for k, v in rows.items()]
    return Dataset(name, cols)


@settings(max_examples=150, deadline=None)
@given(tables())
def test_encode_matches_brute_force(case):
    rows_c, rows_t, fail_c, fail_t, max_bins, thr, add_is_null = case
    c = _categorical_dataset("c", rows_c, fail_c)
    t = _categorical_dataset("t", rows_t, fail_t)
    cfg = DiagnosisConfig("fail", ("inv",), tuple(rows_c), max_bins=max_bins, prune_p_threshold=thr,
                          add_is_null=add_is_null)
    feats, log = encode(c, t, cfg)
    ref, ref_const, ref_pruned = reference_encode(rows_c, rows_t, fail_c, fail_t, max_bins, thr, add_is_null)
    assert [f.name for f in feats] == [name for name, _ in ref]
    for f, (_, mask) in zip(feats, ref):
        assert np.concatenate([f.values_c, f.values_t]).tolist() == mask
    assert log.dropped_constant == ref_const
    assert [name for name, _ in log.dropped_uninformative] == ref_pruned
    n_src = len({f.source for f in feats})
    assert len(feats) <= n_src * max_bins + n_src
    # one-hot completeness on null-free rows of every surviving source
    for src in {f.source for f in feats if not f.is_null_feature}:
        block = np.stack([np.concatenate([f.values_c, f.values_t]) for f in feats
                          if f.source == src and not f.is_null_feature])
        nonnull = np.array([v is not None for v in rows_c[src] + rows_t[src]])
        assert (block.sum(axis=0)[nonnull] == 1).all()


@settings(max_examples=30, deadline=None)
@given(tables())
def test_encode_deterministic(case):
    rows_c, rows_t, fail_c, fail_t, max_bins, thr, add_is_null = case
    c = _categorical_dataset("c", rows_c, fail_c)
    t = _categorical_dataset("t", rows_t, fail_t)
    cfg = DiagnosisConfig("fail", ("inv",), tuple(rows_c), max_bins=max_bins, prune_p_threshold=thr)
    a, la = encode(c, t, cfg)
    b, lb = encode(c, t, cfg)
    assert [(f.name, f.values_c.tolist(), f.values_t.tolist()) for f in a] == \
        [(f.name, f.values_c.tolist(), f.values_t.tolist()) for f in b]
    assert la == lb


def test_numeric_hypothesis_is_quantile_binned():
    vals = list(np.arange(1, 41, dtype=float))
    c = make_dataset(fail=[1] * 20 + [0] * 20, x=vals)
    t = make_dataset(fail=[1] * 20 + [0] * 20, x=vals)
    cfg = DiagnosisConfig("fail", ("inv",), ("x",), numeric_hypothesis_bins=4, prune_p_threshold=1.0)
    feats, _ = encode(c, t, cfg)
    assert [f.name for f in feats] == ["x=q1", "x=q2", "x=q3", "x=q4"]
    assert [int(f.values_c.sum()) for f in feats] == [10, 10, 10, 10]
