"""Random forest over one-hot categorical features.

Rows sharing the same category tuple are indistinguishable to a tree, so
fitting runs on unique patterns weighted by their bootstrap counts; this is
exact, not an approximation, and keeps the cost independent of row count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tabular import Dataset, align_categories, as_categorical

NULL_LABEL = "__null__"
_UNKNOWN = -1


def seed_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for a (master seed, counter...) position."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *keys]))


@dataclass(frozen=True)
class FeatureLayout:
    """Column -> category list map defining the one-hot width."""

    columns: tuple[str, ...]
    categories: tuple[tuple[str, ...], ...]

    @property
    def width(self) -> int:
        return sum(len(c) for c in self.categories)

    def onehot_index(self) -> tuple[np.ndarray, np.ndarray]:
        """(column index, category code) for every one-hot position."""
        cols = np.concatenate([np.full(len(c), i) for i, c in enumerate(self.categories)])
        codes = np.concatenate([np.arange(len(c)) for c in self.categories])
        return cols.astype(np.int64), codes.astype(np.int32)

    def code_matrix(self, dataset: Dataset) -> np.ndarray:
        """(rows x columns) category codes; labels unseen at fit time get -1."""
        out = np.empty((dataset.row_count, len(self.columns)), dtype=np.int32)
        for j, (name, cats) in enumerate(zip(self.columns, self.categories)):
            col = as_categorical(dataset[name])
            labels = col.categories
            pos = {c: i for i, c in enumerate(cats)}
            remap = np.array([pos.get(c, _UNKNOWN) for c in labels]
                             + [pos.get(NULL_LABEL, _UNKNOWN)], dtype=np.int32)
            out[:, j] = remap[col.codes]
        return out


def fit_layout(datasets: Sequence[Dataset], columns: Sequence[str]) -> FeatureLayout:
    cats = []
    for name in columns:
        labels, codes = align_categories(*(d[name] for d in datasets))
        has_null = any((c < 0).any() for c in codes)
        cats.append(tuple(labels) + ((NULL_LABEL,) if has_null else ()))
    return FeatureLayout(tuple(columns), tuple(cats))


@dataclass(frozen=True)
class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf.

    A split sends a row right when its one-hot ``feature`` is 1. Rows whose
    category for the split column was never seen follow ``default_right``.
    """

    feature: np.ndarray
    column: np.ndarray
    code: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    default_right: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict_codes(self, codes: np.ndarray) -> np.ndarray:
        node = np.zeros(len(codes), dtype=np.int64)
        rows = np.arange(len(codes))
        while True:
            active = self.feature[node] >= 0
            if not active.any():
                return self.value[node]
            r, nd = rows[active], node[active]
            got = codes[r, self.column[nd]]
            go_right = np.where(got == _UNKNOWN, self.default_right[nd], got == self.code[nd])
            node[active] = np.where(go_right, self.right[nd], self.left[nd])


def _gini(c, t):
    n = c + t
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, n - (c * c + t * t) / np.where(n > 0, n, 1), 0.0)


def build_tree(onehot: np.ndarray, feat_col: np.ndarray, feat_code: np.ndarray,
               w_c: np.ndarray, w_t: np.ndarray, *, max_depth: int, min_leaf: int,
               rng: np.random.Generator) -> Tree:
    """Grow one CART tree (Gini) on weighted patterns; leaf value = control fraction."""
    d = onehot.shape[1]
    m_try = max(1, int(np.sqrt(d)))
    feature, left, right, value, dflt = [], [], [], [], []

    def new_node():
        feature.append(-1)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        dflt.append(False)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.flatnonzero(w_c + w_t > 0), 0)]
    while stack:
        node, idx, depth = stack.pop()
        wc, wt = w_c[idx], w_t[idx]
        tot_c, tot_t = wc.sum(), wt.sum()
        total = tot_c + tot_t
        value[node] = tot_c / total if total > 0 else 0.0
        if depth >= max_depth or total < 2 * min_leaf or tot_c == 0 or tot_t == 0:
            continue
        x = onehot[idx]
        rc = wc @ x
        rt = wt @ x
        rn = rc + rt
        varying = np.flatnonzero((rn > 0) & (rn < total))
        if len(varying) == 0:
            continue
        order = rng.permutation(d)
        cand = order[np.isin(order, varying)][:m_try]
        c_rc, c_rt = rc[cand], rt[cand]
        c_rn = c_rc + c_rt
        imp = _gini(c_rc, c_rt) + _gini(tot_c - c_rc, tot_t - c_rt)
        valid = (c_rn >= min_leaf) & (total - c_rn >= min_leaf)
        valid &= imp < _gini(tot_c, tot_t) - 1e-12
        if not valid.any():
            continue
        best = int(np.argmin(np.where(valid, imp, np.inf)))
        j = int(cand[best])
        feature[node] = j
        dflt[node] = bool(c_rn[best] > total - c_rn[best])
        goes_right = x[:, j]
        l_node, r_node = new_node(), new_node()
        left[node], right[node] = l_node, r_node
        stack.append((r_node, idx[goes_right], depth + 1))
        stack.append((l_node, idx[~goes_right], depth + 1))

    feat = np.array(feature, dtype=np.int64)
    safe = np.where(feat >= 0, feat, 0)
    return Tree(
        feature=feat,
        column=np.where(feat >= 0, feat_col[safe], 0),
        code=np.where(feat >= 0, feat_code[safe], -2).astype(np.int32),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
        default_right=np.array(dflt, dtype=bool),
    )


@dataclass(frozen=True)
class RandomForest:
    layout: FeatureLayout
    trees: tuple[Tree, ...]

    def predict_codes(self, codes: np.ndarray) -> np.ndarray:
        if len(codes) == 0:
            return np.zeros(0)
        uniq, inv = np.unique(codes, axis=0, return_inverse=True)
        acc = np.zeros(len(uniq))
        for tree in self.trees:  # fixed order keeps the float sum reproducible
            acc += tree.predict_codes(uniq)
        return (acc / len(self.trees))[inv.reshape(-1)]

    def predict(self, dataset: Dataset) -> np.ndarray:
        return self.predict_codes(self.layout.code_matrix(dataset))


def fit_forest(codes: np.ndarray, labels: np.ndarray, layout: FeatureLayout, *,
               n_trees: int, max_depth: int, min_leaf: int, seed: int,
               oob: bool = False):
    """Fit on a (rows x columns) code matrix with boolean labels.

    Returns the forest, plus per-row out-of-bag predictions when ``oob`` is set
    (NaN for rows that were in-bag for every tree).
    """
    n = len(codes)
    patterns, inv = np.unique(codes, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    n_pat = len(patterns)
    feat_col, feat_code = layout.onehot_index()
    onehot = patterns[:, feat_col] == feat_code[None, :]
    labels = np.asarray(labels, dtype=bool)
    trees = []
    oob_sum = np.zeros(n) if oob else None
    oob_cnt = np.zeros(n) if oob else None
    for i in range(n_trees):
        rng = seed_stream(seed, 1, i)
        draw = rng.integers(0, n, size=n)
        lab = labels[draw]
        w_c = np.bincount(inv[draw[lab]], minlength=n_pat).astype(np.float64)
        w_t = np.bincount(inv[draw[~lab]], minlength=n_pat).astype(np.float64)
        tree = build_tree(onehot, feat_col, feat_code, w_c, w_t,
                          max_depth=max_depth, min_leaf=min_leaf, rng=rng)
        trees.append(tree)
        if oob:
            out = np.bincount(draw, minlength=n) == 0
            pred = tree.predict_codes(patterns)[inv]
            oob_sum[out] += pred[out]
            oob_cnt[out] += 1
    forest = RandomForest(layout, tuple(trees))
    if not oob:
        return forest
    with np.errstate(invalid="ignore", divide="ignore"):
        return forest, oob_sum / oob_cnt
