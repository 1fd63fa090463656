"""Leave-one-patient-out evaluation, ROC/AUC, correlations and cohort tables."""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as rngmod
from .classifiers import Dataset, ModelSpec, Scaler, fit_model, presort, smote
from .classifiers.base import check_training_data
from .errors import UndefinedMetricError
from .features import FEATURE_NAMES

log = logging.getLogger(__name__)

Z_95 = 1.96
INNER_FOLDS = 3


class FoldSkippedWarning(UserWarning):
    pass


class DegenerateIntervalWarning(UserWarning):
    pass


# -- ROC / AUC --------------------------------------------------------------------

@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # thresholds[i] produced point i+1; +inf for the origin

    @property
    def points(self) -> list:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _clean(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).astype(int).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    keep = ~np.isnan(s)
    s, y = s[keep], y[keep]
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise UndefinedMetricError("ROC needs both classes among scored samples")
    return s, y


def roc_points(scores, labels) -> RocCurve:
    """One ROC point per distinct score (tied scores move together), highest first.

    NaN scores (skipped folds) are ignored.
    """
    s, y = _clean(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.flatnonzero(np.diff(s) != 0)
    last = np.append(last, len(s) - 1)
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    n_pos, n_neg = tp[-1], fp[-1]
    m = len(last)
    fpr, tpr, thr = np.zeros(m + 1), np.zeros(m + 1), np.empty(m + 1)
    tpr[1:] = tp / n_pos
    fpr[1:] = fp / n_neg
    thr[0] = np.inf
    thr[1:] = s[last]
    if fpr[-1] != 1.0 or tpr[-1] != 1.0:
        fpr, tpr, thr = np.append(fpr, 1.0), np.append(tpr, 1.0), np.append(thr, -np.inf)
    return RocCurve(fpr, tpr, thr)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under ``curve``."""
    f, t = curve.fpr, curve.tpr
    return float(np.sum((f[1:] - f[:-1]) * (t[1:] + t[:-1])) / 2.0)


def auc_score(scores, labels) -> float:
    return auc(roc_points(scores, labels))


# -- correlation and cohort table -----------------------------------------------------

def point_biserial(feature, outcome) -> float:
    """Pearson correlation between a feature and a 0/1 outcome."""
    x = np.asarray(feature, dtype=float)
    y = np.asarray(outcome, dtype=float)
    if len(np.unique(y)) != 2:
        raise UndefinedMetricError("outcome needs both classes")
    if np.ptp(x) == 0:
        raise UndefinedMetricError("feature is constant")
    xc, yc = x - x.mean(), y - y.mean()
    r = float(xc @ yc / math.sqrt((xc @ xc) * (yc @ yc)))
    return max(-1.0, min(1.0, r))


def correlations(X, outcome, names=None) -> dict:
    X = np.asarray(X, dtype=float)
    if names is None:
        names = FEATURE_NAMES if X.shape[1] == len(FEATURE_NAMES) else [
            f"x{j}" for j in range(X.shape[1])]
    out = {}
    for j, name in enumerate(names):
        try:
            out[name] = point_biserial(X[:, j], outcome)
        except UndefinedMetricError:
            out[name] = None
    return out


def cohort_summary(records) -> dict:
    """Counts per sex: survived / not survived and ICU not admitted / admitted."""
    table = {sex: {"survived": 0, "not_survived": 0, "not_admitted": 0, "admitted": 0}
             for sex in ("male", "female")}
    for rec in records:
        row = table[rec.sex]
        row["not_survived" if rec.outcome_death else "survived"] += 1
        row["admitted" if rec.outcome_icu else "not_admitted"] += 1
    return table


def format_cohort_table(summary: dict) -> str:
    lines = [f"{'':8}{'Death':^24}{'ICU':^26}",
             f"{'Sex':8}{'Survived':>12}{'Not survived':>14}{'Not admitted':>14}{'Admitted':>10}"]
    for sex in ("male", "female"):
        r = summary[sex]
        lines.append(f"{sex.capitalize():8}{r['survived']:>12}{r['not_survived']:>14}"
                     f"{r['not_admitted']:>14}{r['admitted']:>10}")
    return "\n".join(lines)


# -- grid search and LOPO ---------------------------------------------------------------

def _stratified_folds(y, k, rng) -> np.ndarray:
    folds = np.empty(len(y), dtype=int)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = np.arange(len(idx)) % k
    return folds


def _share_key(family: str, cell: dict):
    # Cells with equal keys can share one fit (see _inner_scores).
    if family == "adaboost":
        return tuple(sorted((k, v) for k, v in cell.items() if k != "n_estimators"))
    if family == "gbt":
        return tuple(sorted((k, v) for k, v in cell.items() if k != "max_depth"))
    return None


def _inner_scores(train: Dataset, spec: ModelSpec, cells: list, seed: int) -> list:
    """Mean inner-CV AUC per cell (``-inf`` when a cell never fits).

    Two exact shortcuts avoid redundant fits. AdaBoost cells differing only
    in ``n_estimators`` share the longest run, since a shorter run is a prefix
    of it. A boosted-tree fit that never hit its depth limit is identical to
    the fit at any larger ``max_depth``, so it is reused for those cells.
    """
    folds = _stratified_folds(train.y, INNER_FOLDS, rngmod.stream(seed, "inner-folds"))
    sums = np.zeros(len(cells))
    counts = np.zeros(len(cells), dtype=int)
    errors = []
    if spec.family == "adaboost":
        groups: dict = {}
        for c, cell in enumerate(cells):
            groups.setdefault(_share_key("adaboost", cell), []).append(c)
        plan = list(groups.values())
    elif spec.family == "gbt":
        plan = [[c] for c in sorted(range(len(cells)), key=lambda c: cells[c]["max_depth"])]
    else:
        plan = [[c] for c in range(len(cells))]
    for f in range(INNER_FOLDS):
        tr, te = train.subset(np.flatnonzero(folds != f)), train.subset(np.flatnonzero(folds == f))
        if len(set(tr.y.tolist())) < 2 or len(set(te.y.tolist())) < 2:
            continue
        scaler = Scaler.fit(tr.X)
        order = presort(tr.X) if spec.family in ("adaboost", "gbt") else None
        unlimited: dict = {}  # gbt: share key -> fit that never hit its depth limit
        for members in plan:
            cell = dict(cells[members[0]])
            if spec.family == "adaboost":
                cell["n_estimators"] = max(cells[c]["n_estimators"] for c in members)
            model = unlimited.get(_share_key(spec.family, cell)) if spec.family == "gbt" else None
            if model is None:
                try:
                    model = fit_model(spec.family, tr, cell,
                                      seed=rngmod.stream(seed, f"cell{members[0]}/fold{f}"),
                                      scaler=scaler, order=order)
                except (ValueError, ArithmeticError) as exc:
                    errors.append(exc)
                    continue
                if spec.family == "gbt" and not model.depth_limited:
                    unlimited[_share_key("gbt", cell)] = model
            for c in members:
                m = model.truncated(cells[c]["n_estimators"]) if spec.family == "adaboost" else model
                sums[c] += auc_score(m.score(te.X), te.y)
                counts[c] += 1
    if not counts.any() and errors:
        raise errors[-1]
    return [sums[c] / counts[c] if counts[c] else -np.inf for c in range(len(cells))]


def grid_search(train: Dataset, spec: ModelSpec, seed: int = 0) -> dict:
    """Pick the cell with the best mean stratified 3-fold AUC; ties go to the first cell."""
    check_training_data(train)
    cells = spec.cells()
    if len(cells) == 1:
        return cells[0]
    scores = _inner_scores(train, spec, cells, seed)
    best = 0
    for c in range(1, len(cells)):
        if scores[c] > scores[best]:
            best = c
    return cells[best]


@dataclass
class FoldResult:
    patient_id: str
    score: float
    params: Optional[dict]
    importance: Optional[np.ndarray] = None


def _run_fold(data: Dataset, i: int, spec: ModelSpec, seed: int) -> FoldResult:
    pid = data.patient_ids[i]
    train = data.subset(np.delete(np.arange(len(data)), i))
    n_neg, n_pos = train.class_counts()
    if n_neg == 0 or n_pos == 0:
        warnings.warn(f"fold {pid}: training rows lose a class; fold skipped",
                      FoldSkippedWarning, stacklevel=3)
        return FoldResult(pid, float("nan"), None)
    scaler = Scaler.fit(train.X)
    train = smote(train, k=5, seed=rngmod.stream(seed, f"smote/{pid}"), scaler=scaler)
    params = grid_search(train, spec, rngmod.child_seed(seed, f"grid/{pid}"))
    model = fit_model(spec.family, train, params, seed=rngmod.stream(seed, f"fit/{pid}"),
                      scaler=scaler)
    score = float(model.score(data.X[i:i + 1])[0])
    return FoldResult(pid, score, params, model.importance)


def lopo_folds(data: Dataset, spec: ModelSpec, seed: int = 0) -> list:
    """Run every leave-one-patient-out fold; results sorted by patient id.

    Folds depend only on the patient id and ``seed``, never on row order.
    """
    if len(data) < 3:
        raise ValueError("LOPO needs at least 3 patients")
    check_training_data(data)
    if len(set(data.patient_ids)) != len(data):
        raise ValueError("patient ids must be unique")
    order = sorted(range(len(data)), key=lambda i: data.patient_ids[i])
    data = data.subset(order)
    return [_run_fold(data, i, spec, seed) for i in range(len(data))]


def lopo_scores(data: Dataset, spec: ModelSpec, seed: int = 0) -> dict:
    """Held-out score per patient id (NaN for skipped folds)."""
    return {f.patient_id: f.score for f in lopo_folds(data, spec, seed)}


@dataclass
class ExperimentResult:
    outcome: str
    family: str
    patient_ids: list
    labels: np.ndarray
    scores: np.ndarray  # run 0, aligned with patient_ids
    roc: RocCurve
    auc_runs: list
    auc_mean: float
    auc_ci_low: float
    auc_ci_high: float
    importance: Optional[np.ndarray]
    correlations: dict
    seeds: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def summary(self) -> dict:
        imp = None
        if self.importance is not None:
            names = list(self.correlations) or FEATURE_NAMES
            imp = {n: float(v) for n, v in zip(names, self.importance)}
        return {
            "outcome": self.outcome,
            "family": self.family,
            "auc_mean": self.auc_mean,
            "ci": [self.auc_ci_low, self.auc_ci_high],
            "auc_runs": list(self.auc_runs),
            "importance": imp,
            "correlations": self.correlations,
            "seeds": list(self.seeds),
            "grid": self.grid,
            "notes": list(self.notes),
        }


def mean_ci(values, z: float = Z_95):
    """Normal-approximation interval ``mean +/- z * sd / sqrt(n)``."""
    v = np.asarray(values, dtype=float)
    m = float(v.mean())
    if len(v) < 2:
        return m, m, m
    half = z * float(v.std(ddof=1)) / math.sqrt(len(v))
    return m, m - half, m + half


def repeated_experiment(data: Dataset, spec: ModelSpec, repeats: int = 10, base_seed: int = 0,
                        outcome: str = "") -> ExperimentResult:
    """Repeat LOPO with seeds ``base_seed + r``; report mean AUC with a 95% interval."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    notes = []
    if repeats == 1:
        msg = "single repeat: confidence interval degenerates to the point estimate"
        warnings.warn(msg, DegenerateIntervalWarning, stacklevel=2)
        notes.append(msg)
    runs, first, importances = [], None, []
    for r in range(repeats):
        folds = lopo_folds(data, spec, base_seed + r)
        scores = {f.patient_id: f.score for f in folds}
        s = np.array([scores[p] for p in data.patient_ids])
        runs.append(auc_score(s, data.y))
        importances += [f.importance for f in folds if f.importance is not None]
        if first is None:
            first = s
        log.info("%s/%s run %d: AUC %.4f", outcome, spec.family, r, runs[-1])
    mean, lo, hi = mean_ci(runs)
    importance = None
    if importances:
        importance = np.mean(importances, axis=0)
        importance = importance / importance.sum()
    return ExperimentResult(outcome, spec.family, list(data.patient_ids), data.y.copy(), first,
                            roc_points(first, data.y), runs, mean, lo, hi, importance,
                            correlations(data.X, data.y), [base_seed + r for r in range(repeats)],
                            spec.grid, notes)
