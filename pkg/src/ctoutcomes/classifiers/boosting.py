"""Boosted ensembles: discrete SAMME AdaBoost on stumps, and Newton gradient boosting."""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .base import Dataset, TrainedModel, check_training_data, sigmoid
from .trees import LEAF, Tree, partition_segments, presort


# -- AdaBoost -------------------------------------------------------------------

@njit(cache=True)
def _best_stump(X, yb, w, order):
    """Minimum weighted-error stump; returns (error, feature, threshold, polarity).

    polarity +1 predicts positive for ``x > threshold``; -1 the reverse.
    Ties keep the first candidate in (feature, threshold, polarity) order.
    """
    n, d = X.shape
    wpos = 0.0
    for i in range(n):
        wpos += w[i] * yb[i]
    wtot = 0.0
    for i in range(n):
        wtot += w[i]
    best_err = np.inf
    best_f = -1
    best_thr = np.inf
    best_pol = 1
    for f in range(d):
        lpos = 0.0
        lneg = 0.0
        for t in range(n - 1):
            i = order[f, t]
            wi = w[i]
            yi = yb[i]
            lpos += wi * yi
            lneg += wi * (1 - yi)
            v0 = X[i, f]
            v1 = X[order[f, t + 1], f]
            if v0 == v1:
                continue
            # polarity +1: left predicted negative, right positive
            err_p = lpos + (wtot - wpos - lneg)
            err_m = wtot - err_p
            if err_p < best_err:
                best_err, best_f, best_thr, best_pol = err_p, f, 0.5 * (v0 + v1), 1
            if err_m < best_err:
                best_err, best_f, best_thr, best_pol = err_m, f, 0.5 * (v0 + v1), -1
    if best_f < 0:
        # every feature constant: predict the weighted majority everywhere
        best_f = 0
        best_thr = np.inf
        if wpos >= wtot - wpos:
            best_pol = -1
            best_err = wtot - wpos
        else:
            best_pol = 1
            best_err = wpos
    return best_err / wtot, best_f, best_thr, best_pol


@njit(cache=True)
def _samme(X, yb, order, n_estimators, learning_rate):
    n = X.shape[0]
    w = np.full(n, 1.0 / n)
    feats = np.empty(n_estimators, dtype=np.int64)
    thrs = np.empty(n_estimators)
    pols = np.empty(n_estimators, dtype=np.int64)
    alphas = np.empty(n_estimators)
    errs = np.empty(n_estimators)
    sums = np.empty(n_estimators)
    k = 0
    for _ in range(n_estimators):
        err, f, thr, pol = _best_stump(X, yb, w, order)
        if err <= 0.0:
            feats[k], thrs[k], pols[k], alphas[k], errs[k] = f, thr, pol, 1.0, 0.0
            sums[k] = w.sum()
            k += 1
            break
        if err >= 0.5:
            break
        alpha = learning_rate * np.log((1.0 - err) / err)
        feats[k], thrs[k], pols[k], alphas[k], errs[k] = f, thr, pol, alpha, err
        scale = np.exp(alpha)
        for i in range(n):
            pred_pos = (X[i, f] > thr) == (pol > 0)
            if pred_pos != (yb[i] == 1):
                w[i] *= scale
        w /= w.sum()
        sums[k] = w.sum()
        k += 1
    return feats[:k], thrs[:k], pols[:k], alphas[:k], errs[:k], sums[:k]


@dataclass
class AdaBoostModel(TrainedModel):
    features: np.ndarray = None
    thresholds: np.ndarray = None
    polarities: np.ndarray = None
    alphas: np.ndarray = None
    errors: np.ndarray = None
    weight_sums: list = field(default_factory=list)

    def margin(self, X, n_estimators: int = None) -> np.ndarray:
        k = len(self.alphas) if n_estimators is None else min(n_estimators, len(self.alphas))
        X = np.asarray(X, dtype=float)
        votes = np.where(X[:, self.features[:k]] > self.thresholds[:k], 1.0, -1.0)
        return (votes * self.polarities[:k]) @ self.alphas[:k]

    def _score(self, X):
        return sigmoid(self.margin(X))

    def truncated(self, n_estimators: int) -> "AdaBoostModel":
        """The model a fit with fewer rounds would have produced."""
        k = min(n_estimators, len(self.alphas))
        hp = dict(self.hyperparams, n_estimators=n_estimators)
        return AdaBoostModel("adaboost", hp, None, None, self.features[:k], self.thresholds[:k],
                             self.polarities[:k], self.alphas[:k], self.errors[:k],
                             self.weight_sums[:k])

    def _params(self):
        return {"features": self.features, "thresholds": self.thresholds,
                "polarities": self.polarities, "alphas": self.alphas}


def fit_adaboost(data: Dataset, n_estimators: int = 50, learning_rate: float = 1.0,
                 seed=0, order=None) -> AdaBoostModel:
    """Discrete SAMME (two classes) with decision stumps.

    Stops early when a stump is perfect (kept with weight 1) or no better than
    chance (discarded). ``seed`` is accepted for interface symmetry; the fit
    is deterministic. ``order`` may pass in ``presort(data.X)`` when several
    fits share the same rows.
    """
    check_training_data(data)
    X = np.ascontiguousarray(data.X)
    if order is None:
        order = presort(X)
    feats, thrs, pols, alphas, errs, sums = _samme(X, data.y.astype(np.int64), order,
                                                   int(n_estimators), float(learning_rate))
    return AdaBoostModel("adaboost", {"n_estimators": n_estimators,
                                      "learning_rate": learning_rate}, None, None,
                         feats, thrs, pols, alphas, errs, list(sums))


# -- gradient boosting ----------------------------------------------------------

@njit(cache=True)
def _best_split(X, srt, g, h, lo, hi, G, H, lam, min_child_weight):
    # maximise gl^2/(hl+lam) + gr^2/(hr+lam) as a fraction num/den, compared
    # by cross-multiplication; must beat the unsplit score
    d = X.shape[1]
    best_num = G * G / (H + lam)
    best_den = 1.0
    best_f = -1
    best_thr = 0.0
    for f in range(d):
        gl = 0.0
        hl = 0.0
        for t in range(lo, hi - 1):
            e = srt[f, t]
            gl += g[e]
            hl += h[e]
            if hl < min_child_weight:
                continue
            hr = H - hl
            if hr < min_child_weight:
                break
            gr = G - gl
            a = hl + lam
            b = hr + lam
            num = gl * gl * b + gr * gr * a
            den = a * b
            if num * best_den > best_num * den:
                v0 = X[e, f]
                v1 = X[srt[f, t + 1], f]
                if v0 != v1:
                    best_num = num
                    best_den = den
                    best_f = f
                    thr = 0.5 * (v0 + v1)
                    if thr == v1:
                        thr = v0
                    best_thr = thr
    return best_f, best_thr


@njit(cache=True)
def _grow_newton(X, srt0, g, h, raw, max_depth, lam, min_child_weight, eta,
                 feature, threshold, left, right, value, nsamp, go_left, buf,
                 srt, stack_i, stack_f, limited):
    """Depth-limited exact greedy regression tree on gradient statistics.

    Writes the tree into the given node arrays and returns ``(n_nodes,
    depth_limited)``. Leaves hold ``-eta * G / (H + lam)``, which is also added
    to ``raw`` for their samples. A split needs positive gain and hessian mass
    ``>= min_child_weight`` on both sides. ``depth_limited`` reports whether
    some node at ``max_depth`` has a valid split; once ``limited`` is already
    True on entry that search is skipped. ``srt``, ``stack_i`` and ``stack_f``
    are scratch buffers.
    """
    n = X.shape[0]
    srt[:, :] = srt0
    feature[:] = LEAF
    left[:] = -1
    right[:] = -1
    G = 0.0
    H = 0.0
    for e in range(n):
        G += g[e]
        H += h[e]
    # stack_i rows: node, lo, hi, depth; stack_f rows: G, H
    stack_i[0, 0] = 0
    stack_i[0, 1] = 0
    stack_i[0, 2] = n
    stack_i[0, 3] = 0
    stack_f[0, 0] = G
    stack_f[0, 1] = H
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack_i[top, 0]
        lo = stack_i[top, 1]
        hi = stack_i[top, 2]
        depth = stack_i[top, 3]
        G = stack_f[top, 0]
        H = stack_f[top, 1]
        nsamp[node] = hi - lo
        best_f = -1
        best_thr = 0.0
        if H >= 2.0 * min_child_weight and hi - lo >= 2:
            if depth < max_depth:
                best_f, best_thr = _best_split(X, srt, g, h, lo, hi, G, H, lam,
                                               min_child_weight)
            elif not limited:
                f, _ = _best_split(X, srt, g, h, lo, hi, G, H, lam, min_child_weight)
                limited = f >= 0
        if best_f < 0:
            v = -eta * G / (H + lam)
            value[node] = v
            for t in range(lo, hi):
                raw[srt[0, t]] += v
            continue
        gl = 0.0
        hl = 0.0
        nl = 0
        for t in range(lo, hi):
            e = srt[0, t]
            gol = X[e, best_f] <= best_thr
            go_left[e] = gol
            if gol:
                gl += g[e]
                hl += h[e]
                nl += 1
        gr = G - gl
        hr = H - hl
        ln = n_nodes
        rn = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = ln
        right[node] = rn
        cd = depth + 1
        capped = cd >= max_depth and limited
        l_leaf = capped or not (hl >= 2.0 * min_child_weight and nl >= 2)
        r_leaf = capped or not (hr >= 2.0 * min_child_weight and hi - lo - nl >= 2)
        if l_leaf and r_leaf:
            # both children are leaves: no need to keep their entries sorted
            vl = -eta * gl / (hl + lam)
            vr = -eta * gr / (hr + lam)
            value[ln] = vl
            value[rn] = vr
            nsamp[ln] = nl
            nsamp[rn] = hi - lo - nl
            for t in range(lo, hi):
                e = srt[0, t]
                raw[e] += vl if go_left[e] else vr
            continue
        mid = partition_segments(srt, lo, hi, go_left, buf)
        stack_i[top, 0] = rn
        stack_i[top, 1] = mid
        stack_i[top, 2] = hi
        stack_i[top, 3] = cd
        stack_f[top, 0] = gr
        stack_f[top, 1] = hr
        top += 1
        stack_i[top, 0] = ln
        stack_i[top, 1] = lo
        stack_i[top, 2] = mid
        stack_i[top, 3] = cd
        stack_f[top, 0] = gl
        stack_f[top, 1] = hl
        top += 1
    return n_nodes, limited


@njit(cache=True)
def _boost(X, srt, y, n_rounds, max_depth, lam, min_child_weight, eta, base):
    n = X.shape[0]
    cap = min(2 ** (max_depth + 1), 2 * n + 1)
    feature = np.full((n_rounds, cap), LEAF, dtype=np.int64)
    threshold = np.zeros((n_rounds, cap))
    left = np.full((n_rounds, cap), -1, dtype=np.int64)
    right = np.full((n_rounds, cap), -1, dtype=np.int64)
    value = np.zeros((n_rounds, cap))
    nsamp = np.zeros((n_rounds, cap), dtype=np.int64)
    n_nodes = np.zeros(n_rounds, dtype=np.int64)
    go_left = np.zeros(n, dtype=np.bool_)
    buf = np.empty(n, dtype=np.int64)
    raw = np.full(n, base)
    g = np.empty(n)
    h = np.empty(n)
    losses = np.empty(n_rounds + 1)
    work = np.empty_like(srt)
    stack_i = np.empty((cap, 4), dtype=np.int64)
    stack_f = np.empty((cap, 2))
    limited = False
    for r in range(n_rounds + 1):
        loss = 0.0
        for i in range(n):
            z = raw[i]
            if z >= 0:
                e = np.exp(-z)
                p = 1.0 / (1.0 + e)
                loss += z + np.log1p(e) - y[i] * z
            else:
                e = np.exp(z)
                p = e / (1.0 + e)
                loss += np.log1p(e) - y[i] * z
            g[i] = p - y[i]
            h[i] = p * (1.0 - p)
        losses[r] = loss / n
        if r == n_rounds:
            break
        k, limited = _grow_newton(X, srt, g, h, raw, max_depth, lam, min_child_weight, eta,
                                  feature[r], threshold[r], left[r], right[r], value[r],
                                  nsamp[r], go_left, buf, work, stack_i, stack_f, limited)
        n_nodes[r] = k
    return feature, threshold, left, right, value, nsamp, n_nodes, losses, limited


@njit(cache=True)
def _forest_sum(X, feature, threshold, left, right, value, base):
    n = X.shape[0]
    out = np.full(n, base)
    for r in range(feature.shape[0]):
        for i in range(n):
            node = 0
            while feature[r, node] != LEAF:
                if X[i, feature[r, node]] <= threshold[r, node]:
                    node = left[r, node]
                else:
                    node = right[r, node]
            out[i] += value[r, node]
    return out


@dataclass
class GBTModel(TrainedModel):
    arrays: tuple = None  # stacked (feature, threshold, left, right, value, n_samples)
    n_nodes: np.ndarray = None
    base_score: float = 0.0
    train_loss: np.ndarray = None
    depth_limited: bool = True

    @property
    def trees(self) -> list:
        f, t, l, r, v, s = self.arrays
        return [Tree(f[k, :m], t[k, :m], l[k, :m], r[k, :m], v[k, :m], s[k, :m], np.zeros(m))
                for k, m in enumerate(self.n_nodes)]

    def raw(self, X) -> np.ndarray:
        f, t, l, r, v, _ = self.arrays
        return _forest_sum(np.ascontiguousarray(X, dtype=float), f, t, l, r, v,
                           self.base_score)

    def _score(self, X):
        return sigmoid(self.raw(X))

    def _params(self):
        return {"base_score": self.base_score,
                "trees": [{"feature": t.feature.tolist(), "threshold": t.threshold.tolist(),
                           "left": t.left.tolist(), "right": t.right.tolist(),
                           "value": t.value.tolist()} for t in self.trees]}


def fit_gbt(data: Dataset, max_depth: int = 3, n_rounds: int = 100, learning_rate: float = 0.1,
            seed=0, reg_lambda: float = 1.0, min_child_weight: float = 1.0,
            order=None) -> GBTModel:
    """Logistic-loss gradient boosting with Newton leaf values.

    Deterministic (no row or column subsampling); ``seed`` is accepted for
    interface symmetry. Raw predictions start at 0, i.e. probability 0.5.
    When the returned model has ``depth_limited`` False, no node at
    ``max_depth`` had a valid split, so any larger ``max_depth`` yields the
    identical model. ``order`` may pass in ``presort(data.X)``.
    """
    check_training_data(data)
    X = np.ascontiguousarray(data.X)
    if order is None:
        order = presort(X)
    out = _boost(X, order, data.y.astype(np.float64), int(n_rounds), int(max_depth),
                 float(reg_lambda), float(min_child_weight), float(learning_rate), 0.0)
    *arrays, n_nodes, losses, limited = out
    return GBTModel("gbt", {"max_depth": max_depth, "n_rounds": n_rounds,
                            "learning_rate": learning_rate, "reg_lambda": reg_lambda,
                            "min_child_weight": min_child_weight},
                    None, None, arrays=tuple(arrays), n_nodes=n_nodes, base_score=0.0,
                    train_loss=losses, depth_limited=bool(limited))
