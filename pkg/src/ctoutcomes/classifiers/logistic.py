"""L1-penalised logistic regression by proximal Newton with coordinate descent."""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .base import Dataset, Scaler, TrainedModel, check_training_data, sigmoid


@njit(cache=True)
def _log1pexp(z):
    if z > 0:
        return z + np.log1p(np.exp(-z))
    return np.log1p(np.exp(z))


@njit(cache=True)
def _sig(z):
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _objective(margin, y, w, lam):
    n = margin.shape[0]
    s = 0.0
    for i in range(n):
        s += _log1pexp(margin[i]) - y[i] * margin[i]
    return s / n + lam * np.abs(w).sum()


@njit(cache=True)
def _violation(ZT, y, margin, w, lam, p):
    # largest entry of the minimum-norm subgradient
    d, n = ZT.shape
    for i in range(n):
        p[i] = _sig(margin[i]) - y[i]
    viol = abs(p.sum() / n)
    for j in range(d):
        g = 0.0
        for i in range(n):
            g += p[i] * ZT[j, i]
        g /= n
        if w[j] != 0.0:
            v = abs(g + lam * np.sign(w[j]))
        else:
            v = max(abs(g) - lam, 0.0)
        viol = max(viol, v)
    return viol


@njit(cache=True)
def _cd_l1(ZT, y, lam, tol, max_iter):
    """Proximal Newton: cyclic coordinate descent on a weighted least-squares
    model of the log-loss, then a backtracking step on the true objective.

    ``ZT`` is the (d, n) transposed design. Returns ``(w, b, n_outer)``.
    """
    d, n = ZT.shape
    w = np.zeros(d)
    b = 0.0
    margin = np.zeros(n)
    p = np.empty(n)
    wt = np.empty(n)
    r = np.empty(n)
    a = np.empty(d)
    w_new = np.empty(d)
    dm = np.empty(n)
    cand = np.empty(n)
    f_cur = _objective(margin, y, w, lam)
    n_outer = 0
    for it in range(max_iter):
        n_outer = it + 1
        if _violation(ZT, y, margin, w, lam, p) < tol:
            break
        # quadratic model around the current margin; r is its residual
        sw = 0.0
        for i in range(n):
            pi = _sig(margin[i])
            wi = max(pi * (1.0 - pi), 1e-10)
            wt[i] = wi
            r[i] = (y[i] - pi) / wi
            sw += wi
        for j in range(d):
            s = 0.0
            for i in range(n):
                s += wt[i] * ZT[j, i] * ZT[j, i]
            a[j] = s / n
        w_new[:] = w
        b_new = b
        for inner in range(1000):
            change = 0.0
            s = 0.0
            for i in range(n):
                s += wt[i] * r[i]
            db = s / sw
            if db != 0.0:
                b_new += db
                for i in range(n):
                    r[i] -= db
                change = max(change, abs(db))
            for j in range(d):
                if a[j] <= 0.0:
                    continue
                s = 0.0
                for i in range(n):
                    s += wt[i] * ZT[j, i] * r[i]
                u = s / n + a[j] * w_new[j]
                nj = np.sign(u) * max(abs(u) - lam, 0.0) / a[j]
                dj = nj - w_new[j]
                if dj != 0.0:
                    w_new[j] = nj
                    for i in range(n):
                        r[i] -= dj * ZT[j, i]
                    change = max(change, abs(dj) * np.sqrt(a[j]))
            if change < 0.1 * tol:
                break
        # direction in margin space
        dbias = b_new - b
        for i in range(n):
            dm[i] = dbias
        for j in range(d):
            dj = w_new[j] - w[j]
            if dj != 0.0:
                for i in range(n):
                    dm[i] += dj * ZT[j, i]
        step = 1.0
        moved = False
        for _ in range(60):
            for i in range(n):
                cand[i] = margin[i] + step * dm[i]
            wc = w + step * (w_new - w)
            f = _objective(cand, y, wc, lam)
            if f <= f_cur:
                moved = f < f_cur or step == 1.0
                margin[:] = cand
                w[:] = wc
                b += step * dbias
                f_cur = f
                break
            step *= 0.5
        if not moved:
            break
    return w, b, n_outer


@dataclass
class LogisticModel(TrainedModel):
    weights: np.ndarray = None
    bias: float = 0.0
    n_iter: int = 0

    def _score(self, Z):
        return sigmoid(Z @ self.weights + self.bias)

    def _params(self):
        return {"weights": self.weights, "bias": self.bias}


def fit_logistic_l1(data: Dataset, c: float = 1.0, lam: float = None,
                    scaler: Scaler = None, tol: float = 1e-6,
                    max_iter: int = 10_000) -> LogisticModel:
    """Minimise mean log-loss + ``lam * sum|w|`` on z-scored features; bias unpenalised.

    ``lam`` defaults to ``1 / (c * n)``, the mean-loss form of a summed-loss
    objective with inverse regularisation strength ``c``.
    """
    check_training_data(data)
    if scaler is None:
        scaler = Scaler.fit(data.X)
    if lam is None:
        lam = 1.0 / (c * len(data))
    ZT = np.ascontiguousarray(scaler.transform(data.X).T)
    w, b, n_iter = _cd_l1(ZT, data.y.astype(np.float64), float(lam), tol, max_iter)
    return LogisticModel("logistic_l1", {"c": c, "lam": float(lam)}, scaler,
                         weights=w, bias=float(b), n_iter=int(n_iter))
