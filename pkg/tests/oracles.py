"""Independent reference implementations used by the tests.

Nothing here imports the package under test. Each oracle is written in the
most direct way possible, trading speed for obviousness.
"""

import itertools
import math
from collections import deque

import numpy as np


def neighbours(connectivity: int):
    """Offsets (dz, dy, dx) for face-6 or full-26 adjacency."""
    offs = []
    for dz, dy, dx in itertools.product((-1, 0, 1), repeat=3):
        n_nonzero = abs(dz) + abs(dy) + abs(dx)
        if n_nonzero == 0:
            continue
        if connectivity == 6 and n_nonzero != 1:
            continue
        offs.append((dz, dy, dx))
    return offs


def flood_fill_labels(mask: np.ndarray, connectivity: int) -> np.ndarray:
    """Component ids 1..K assigned in x-fastest scan order of first voxel."""
    mask = np.asarray(mask, dtype=bool)
    nz, ny, nx = mask.shape
    labels = np.zeros(mask.shape, dtype=np.int64)
    offs = neighbours(connectivity)
    current = 0
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if not mask[z, y, x] or labels[z, y, x]:
                    continue
                current += 1
                labels[z, y, x] = current
                queue = deque([(z, y, x)])
                while queue:
                    cz, cy, cx = queue.popleft()
                    for dz, dy, dx in offs:
                        qz, qy, qx = cz + dz, cy + dy, cx + dx
                        if (0 <= qz < nz and 0 <= qy < ny and 0 <= qx < nx
                                and mask[qz, qy, qx] and not labels[qz, qy, qx]):
                            labels[qz, qy, qx] = current
                            queue.append((qz, qy, qx))
    return labels


def fill_holes_slice(mask2d: np.ndarray) -> np.ndarray:
    """Background not 4-connected to the border becomes foreground."""
    m = np.asarray(mask2d, dtype=bool)
    ny, nx = m.shape
    outside = np.zeros_like(m)
    queue = deque()
    for y in range(ny):
        for x in range(nx):
            if (y in (0, ny - 1) or x in (0, nx - 1)) and not m[y, x]:
                outside[y, x] = True
                queue.append((y, x))
    while queue:
        y, x = queue.popleft()
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            qy, qx = y + dy, x + dx
            if 0 <= qy < ny and 0 <= qx < nx and not m[qy, qx] and not outside[qy, qx]:
                outside[qy, qx] = True
                queue.append((qy, qx))
    return ~outside


def mann_whitney_auc(scores, labels) -> float:
    """Fraction of (positive, negative) pairs ranked correctly; ties count 1/2."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def pearson(x, y) -> float:
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def gini(counts) -> float:
    total = sum(counts)
    return 1.0 - sum((c / total) ** 2 for c in counts)


def svm_dual_bruteforce(K, y, C, steps: int = 200):
    """Maximise the soft-margin dual over a 4-point problem by exhaustive search.

    With ``sum(alpha * y) = 0`` one alpha is determined by the other three, so
    the search is a 3-D grid over ``[0, C]^3`` followed by local refinement.
    """
    y = np.asarray(y, dtype=float)
    K = np.asarray(K, dtype=float)
    Q = (y[:, None] * y[None, :]) * K

    def objective(a):
        return a.sum() - 0.5 * a @ Q @ a

    def complete(a3):
        a4 = -(a3 @ y[:3]) * y[3]
        if a4 < -1e-12 or a4 > C + 1e-12:
            return None
        return np.r_[a3, min(max(a4, 0.0), C)]

    best, best_a = -np.inf, None
    grid = np.linspace(0.0, C, steps + 1)
    for a0 in grid:
        for a1 in grid:
            for a2 in grid:
                a = complete(np.array([a0, a1, a2]))
                if a is not None:
                    v = objective(a)
                    if v > best:
                        best, best_a = v, a
    # shrink the grid around the best point
    width = C / steps
    for _ in range(30):
        centre = best_a[:3]
        local = [np.clip(np.linspace(c - width, c + width, 11), 0.0, C) for c in centre]
        for a3 in itertools.product(*local):
            a = complete(np.array(a3))
            if a is not None:
                v = objective(a)
                if v > best:
                    best, best_a = v, a
        width /= 4.0
    return best, best_a


def best_stump(X, y_pm, w):
    """Exhaustive stump search by weighted error.

    Thresholds are midpoints between consecutive distinct values plus one
    below the minimum. A stump predicts ``pol`` where ``x > thr`` and
    ``-pol`` otherwise. Returns ``(error, feature, threshold, polarity)`` of
    the minimum error; ties keep the first in (feature, threshold, polarity)
    enumeration order with polarity +1 before -1.
    """
    X = np.asarray(X, dtype=float)
    best = None
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        thrs = [vals[0] - 1.0] + [(a + b) / 2 for a, b in zip(vals[:-1], vals[1:])]
        for thr in thrs:
            for pol in (1, -1):
                pred = np.where(X[:, f] > thr, pol, -pol)
                err = float(w[pred != y_pm].sum())
                if best is None or err < best[0] - 1e-12:
                    best = (err, f, thr, pol)
    return best


def logistic_l1_oracle(Z, y, lam):
    """Solve mean log-loss + lam * |w|_1 via a bound-constrained smooth split."""
    from scipy.optimize import minimize

    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = Z.shape

    def f(v):
        u, s, b = v[:d], v[d:2 * d], v[-1]
        m = Z @ (u - s) + b
        loss = np.logaddexp(0.0, m) - y * m
        p = 0.5 * (1.0 + np.tanh(0.5 * m)) - y
        g = Z.T @ p / n
        return loss.mean() + lam * (u.sum() + s.sum()), np.r_[g + lam, -g + lam, p.mean()]

    res = minimize(f, np.zeros(2 * d + 1), jac=True, method="L-BFGS-B",
                   bounds=[(0, None)] * (2 * d) + [(None, None)],
                   options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 50000})
    return res.x[:d] - res.x[d:2 * d], res.x[-1], res.fun


def newton_leaf(g, h, lam, eta):
    return -eta * sum(g) / (sum(h) + lam)
