"""Soft-margin RBF support vector machine trained by SMO.

Working-set selection uses second-order information (maximal violating
pair with the largest predicted dual gain), as in LIBSVM.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .base import Dataset, Scaler, TrainedModel, check_training_data

TAU = 1e-12


def rbf_kernel(A, B, gamma):
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@njit(cache=True)
def _smo(K, y, C, eps, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    it = 0
    while it < max_iter:
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * G[t]
                if v > gmax:
                    gmax = v
                    i = t
        gmin = np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * G[t]
                if v < gmin:
                    gmin = v
                if i >= 0 and v < gmax:
                    bgap = gmax - v
                    a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                    if a <= 0:
                        a = TAU
                    obj = -(bgap * bgap) / a
                    if obj < best:
                        best = obj
                        j = t
        if i < 0 or j < 0 or gmax - gmin < eps:
            break
        it += 1
        Qii = K[i, i]
        Qjj = K[j, j]
        Qij = y[i] * y[j] * K[i, j]
        ai_old = alpha[i]
        aj_old = alpha[j]
        if y[i] != y[j]:
            quad = Qii + Qjj + 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = Qii + Qjj - 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        for t in range(n):
            G[t] += y[t] * (y[i] * K[t, i] * dai + y[j] * K[t, j] * daj)
    # offset from free vectors, else the midpoint of the feasible interval
    nfree = 0
    sfree = 0.0
    ub = np.inf
    lb = -np.inf
    for t in range(n):
        yg = y[t] * G[t]
        if 0 < alpha[t] < C:
            nfree += 1
            sfree += yg
        elif (alpha[t] >= C and y[t] < 0) or (alpha[t] <= 0 and y[t] > 0):
            ub = min(ub, yg)
        else:
            lb = max(lb, yg)
    rho = sfree / nfree if nfree > 0 else 0.5 * (ub + lb)
    return alpha, -rho, it


def dual_objective(alpha, y, K):
    """Dual value ``sum(a) - 0.5 * sum_ij a_i a_j y_i y_j K_ij`` (to be maximised)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


@dataclass
class SVMModel(TrainedModel):
    support: np.ndarray = None  # standardized support vectors
    coef: np.ndarray = None  # alpha_i * y_i
    intercept: float = 0.0
    gamma: float = 0.1
    n_iter: int = 0

    def _score(self, Z):
        if len(self.coef) == 0:
            return np.full(len(Z), self.intercept)
        return rbf_kernel(Z, self.support, self.gamma) @ self.coef + self.intercept

    def _params(self):
        return {"support": self.support, "coef": self.coef, "intercept": self.intercept}


def fit_svm_rbf(data: Dataset, gamma: float = 0.1, c: float = 1.0, scaler: Scaler = None,
                tol: float = 1e-3, max_iter: int = 10_000_000, return_alpha: bool = False):
    """Fit on z-scored features; scores are signed decision values."""
    check_training_data(data)
    if scaler is None:
        scaler = Scaler.fit(data.X)
    Z = np.ascontiguousarray(scaler.transform(data.X))
    y = np.where(data.y == 1, 1.0, -1.0)
    K = rbf_kernel(Z, Z, gamma)
    alpha, b, n_iter = _smo(K, y, float(c), tol, max_iter)
    sv = alpha > 0
    model = SVMModel("svm_rbf", {"gamma": gamma, "c": c}, scaler, support=Z[sv],
                     coef=(alpha * y)[sv], intercept=float(b), gamma=gamma, n_iter=int(n_iter))
    if return_alpha:
        return model, alpha
    return model
