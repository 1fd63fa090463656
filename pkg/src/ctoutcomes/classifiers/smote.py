"""SMOTE oversampling of the minority class."""

import warnings

import numpy as np

from .base import Dataset, Scaler, check_training_data


class SmoteWarning(UserWarning):
    pass


def smote(data: Dataset, k: int = 5, seed=0, scaler: Scaler = None) -> Dataset:
    """Oversample the minority class to the majority count.

    Synthetic rows are ``x + lam * (x_nn - x)`` with ``lam ~ U[0, 1)`` and
    ``x_nn`` one of the ``k`` nearest minority neighbours of ``x``, with
    distances measured on standardized features (``scaler`` or fitted here).
    Originals keep their order; synthetic rows are appended.
    """
    check_training_data(data)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_neg, n_pos = data.class_counts()
    if n_neg == n_pos:
        return data
    minority = 1 if n_pos < n_neg else 0
    n_new = abs(n_neg - n_pos)
    idx = np.flatnonzero(data.y == minority)
    Xm = data.X[idx]
    m = len(idx)

    if m == 1:
        warnings.warn("single minority sample: SMOTE degrades to duplication", SmoteWarning,
                      stacklevel=2)
        synth = np.repeat(Xm, n_new, axis=0)
    else:
        k_eff = min(k, m - 1)
        if scaler is None:
            scaler = Scaler.fit(data.X)
        Z = scaler.transform(Xm)
        d2 = ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        neighbours = np.argsort(d2, axis=1, kind="stable")[:, :k_eff]
        base = rng.integers(0, m, size=n_new)
        pick = neighbours[base, rng.integers(0, k_eff, size=n_new)]
        lam = rng.random(n_new)[:, None]
        synth = Xm[base] + lam * (Xm[pick] - Xm[base])

    ids = [f"smote:{i}" for i in range(n_new)]
    return Dataset(np.vstack([data.X, synth]),
                   np.concatenate([data.y, np.full(n_new, minority)]),
                   list(data.patient_ids) + ids)
