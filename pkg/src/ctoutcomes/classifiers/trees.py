"""Gini impurity, CART classification trees and the random forest."""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..errors import NotFittedError, UndefinedMetricError
from .base import Dataset, TrainedModel, check_training_data

LEAF = -1


def gini_impurity(counts) -> float:
    """``sum p_i (1 - p_i)`` over class frequencies."""
    counts = np.asarray(counts, dtype=float)
    if (counts < 0).any():
        raise ValueError("class counts must be non-negative")
    total = counts.sum()
    if total == 0:
        raise UndefinedMetricError("Gini impurity undefined for an empty node")
    p = counts / total
    return float((p * (1.0 - p)).sum())


@dataclass
class Tree:
    """Flat binary tree; samples with ``x[feature] <= threshold`` go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # positive-class fraction at each node
    n_samples: np.ndarray
    impurity: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X) -> np.ndarray:
        return _apply(np.ascontiguousarray(X, dtype=float), self.feature, self.threshold,
                      self.left, self.right)

    def predict_positive_fraction(self, X) -> np.ndarray:
        return self.value[self.apply(X)]


@njit(cache=True)
def _apply(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


def presort(X) -> np.ndarray:
    """Column-wise stable sort order of ``X``, shape ``(d, n)``."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))


@njit(cache=True)
def restrict_order(order, counts):
    """Drop rows with zero count from each column of the ``(d, n)`` presort."""
    d, n = order.shape
    m = 0
    for i in range(n):
        if counts[i] > 0:
            m += 1
    out = np.empty((d, m), dtype=np.int64)
    for f in range(d):
        t = 0
        for q in range(n):
            i = order[f, q]
            if counts[i] > 0:
                out[f, t] = i
                t += 1
    return out


@njit(cache=True)
def partition_segments(srt, lo, hi, go_left, buf):
    """Stable in-place split of ``srt[:, lo:hi]`` into left then right; returns the cut."""
    d = srt.shape[0]
    mid = lo
    for f in range(d):
        a = lo
        b = 0
        for t in range(lo, hi):
            e = srt[f, t]
            if go_left[e]:
                srt[f, a] = e
                a += 1
            else:
                buf[b] = e
                b += 1
        for t in range(b):
            srt[f, a + t] = buf[t]
        mid = a
    return mid


@njit(cache=True)
def _grow(X, y, wt, srt, max_features, keys):
    """Grow a Gini tree until leaves are pure.

    Rows are those listed in ``srt`` (column-sorted), each counted ``wt[i]``
    times, so a bootstrap sample is a weighted set of unique rows. ``keys[k]``
    orders the features examined at the k-th node created; the search stops
    after ``max_features`` non-constant features, or continues past that until
    some valid split exists.
    """
    d, m = srt.shape
    cap = 2 * m + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    nsamp = np.zeros(cap, dtype=np.int64)
    imp = np.zeros(cap)
    go_left = np.zeros(X.shape[0], dtype=np.bool_)
    buf = np.empty(m, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = m
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        cnt = 0
        pos = 0
        for t in range(lo, hi):
            e = srt[0, t]
            cnt += wt[e]
            pos += wt[e] * y[e]
        nsamp[node] = cnt
        pfrac = pos / cnt
        value[node] = pfrac
        g = 2.0 * pfrac * (1.0 - pfrac)
        imp[node] = g
        if pos == 0 or pos == cnt or hi - lo < 2:
            continue
        feat_order = np.argsort(keys[node])
        best_dec = 0.0
        best_f = -1
        best_thr = 0.0
        examined = 0
        for q in range(d):
            if examined >= max_features and best_f >= 0:
                break
            f = feat_order[q]
            if X[srt[f, lo], f] == X[srt[f, hi - 1], f]:
                continue
            examined += 1
            lpos = 0
            nl = 0
            for t in range(lo, hi - 1):
                e = srt[f, t]
                nl += wt[e]
                lpos += wt[e] * y[e]
                v0 = X[e, f]
                v1 = X[srt[f, t + 1], f]
                if v0 == v1:
                    continue
                nr = cnt - nl
                pl = lpos / nl
                pr = (pos - lpos) / nr
                child = (nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)) / cnt
                dec = g - child
                if dec > best_dec + 1e-15:
                    best_dec = dec
                    best_f = f
                    best_thr = 0.5 * (v0 + v1)
                    if best_thr == v1:
                        best_thr = v0
        if best_f < 0:
            continue
        for t in range(lo, hi):
            e = srt[0, t]
            go_left[e] = X[e, best_f] <= best_thr
        mid = partition_segments(srt, lo, hi, go_left, buf)
        feature[node] = best_f
        threshold[node] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        st_node[top] = rnode
        st_lo[top] = mid
        st_hi[top] = hi
        top += 1
        st_node[top] = lnode
        st_lo[top] = lo
        st_hi[top] = mid
        top += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], nsamp[:n_nodes], imp[:n_nodes])


def grow_tree(X, y, rows=None, max_features=None, rng=None, order=None) -> Tree:
    """Gini tree on ``X[rows]`` (rows may repeat, as in a bootstrap sample)."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    rows = np.arange(n) if rows is None else np.asarray(rows, dtype=np.int64)
    max_features = d if max_features is None else int(max_features)
    rng = np.random.default_rng(0) if rng is None else rng
    if order is None:
        order = presort(X)
    counts = np.bincount(rows, minlength=n).astype(np.int64)
    srt = restrict_order(order, counts)
    keys = rng.random((2 * srt.shape[1] + 1, d))
    return Tree(*_grow(X, y, counts, srt, max_features, keys))


def gini_feature_importance(forest, n_features: int = None) -> np.ndarray:
    """Node-weighted Gini decrease per split feature, averaged over trees, normalised.

    Each split node contributes ``(n_node / n_root) * (g_node - n_l/n_node g_l -
    n_r/n_node g_r)``. Accepts a fitted forest or a list of ``Tree``. If no tree
    has a split the importance is uniform.
    """
    trees = getattr(forest, "trees", forest)
    if not trees:
        raise NotFittedError("forest has no trees")
    if n_features is None:
        n_features = getattr(forest, "n_features", None)
    if n_features is None:
        raise ValueError("n_features is required for a bare list of trees")
    total = np.zeros(n_features)
    for tree in trees:
        k = np.flatnonzero(tree.feature != LEAF)
        if len(k) == 0:
            continue
        nk = tree.n_samples[k].astype(float)
        l, r = tree.left[k], tree.right[k]
        dec = (tree.impurity[k] - tree.n_samples[l] / nk * tree.impurity[l]
               - tree.n_samples[r] / nk * tree.impurity[r])
        total += np.bincount(tree.feature[k], weights=nk / tree.n_samples[0] * dec,
                             minlength=n_features)
    total /= len(trees)
    s = total.sum()
    if s <= 0:
        return np.full(n_features, 1.0 / n_features)
    return total / s


@dataclass
class RandomForestModel(TrainedModel):
    trees: list = field(default_factory=list)
    n_features: int = 0

    def _score(self, X):
        votes = np.zeros(len(X))
        for tree in self.trees:
            votes += tree.predict_positive_fraction(X) > 0.5
        return votes / len(self.trees)

    def _params(self):
        return {"trees": [{"feature": t.feature.tolist(), "threshold": t.threshold.tolist(),
                           "left": t.left.tolist(), "right": t.right.tolist(),
                           "value": t.value.tolist()} for t in self.trees]}


def fit_random_forest(data: Dataset, n_trees: int = 100, seed=0,
                      max_features: int = None) -> RandomForestModel:
    """Bootstrap Gini trees grown to purity, ``floor(sqrt(d))`` candidate features per node."""
    check_training_data(data)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, d = data.X.shape
    if max_features is None:
        max_features = max(1, int(np.floor(np.sqrt(d))))
    X = np.ascontiguousarray(data.X)
    y = data.y.astype(np.int64)
    order = presort(X)
    trees = []
    for _ in range(n_trees):
        rows = rng.integers(0, n, size=n)
        trees.append(grow_tree(X, y, rows, max_features, rng, order))
    model = RandomForestModel("random_forest", {"n_trees": n_trees, "max_features": max_features},
                              None, trees=trees, n_features=d)
    model.importance = gini_feature_importance(model)
    return model
