"""Shared containers for the outcome classifiers."""

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from ..errors import DegenerateLabelsError, ValidationError

FAMILIES = ("logistic_l1", "svm_rbf", "random_forest", "adaboost", "gbt")

# Declaration order matters: grid-search ties go to the earliest cell.
DEFAULT_GRIDS = {
    "logistic_l1": {"c": [1.0]},
    "svm_rbf": {"gamma": [0.1], "c": [1.0]},
    "random_forest": {"n_trees": [100]},
    "adaboost": {"n_estimators": [50, 100], "learning_rate": [1.0, 1.7, 1.33, 1.5]},
    "gbt": {"max_depth": [3, 5, 7, 9], "n_rounds": [100], "learning_rate": [0.1]},
}


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    patient_ids: list = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.y = np.asarray(self.y).astype(np.int64).ravel()
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise ValidationError(f"X has {len(self.X)} rows but y has {len(self.y)}")
        if not ((self.y == 0) | (self.y == 1)).all():
            raise ValidationError("labels must be 0/1")
        if self.patient_ids is None:
            self.patient_ids = [str(i) for i in range(len(self.y))]
        self.patient_ids = list(self.patient_ids)
        if len(self.patient_ids) != len(self.y):
            raise ValidationError("patient_ids length does not match rows")

    def __len__(self):
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], [self.patient_ids[i] for i in idx])

    def class_counts(self) -> tuple:
        n_pos = int(self.y.sum())
        return len(self.y) - n_pos, n_pos


@dataclass(frozen=True)
class ModelSpec:
    family: str
    grid: dict = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        grid = DEFAULT_GRIDS[self.family] if self.grid is None else self.grid
        object.__setattr__(self, "grid", {k: list(v) for k, v in grid.items()})

    def cells(self) -> list:
        keys = list(self.grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*self.grid.values())]


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Scaler":
        X = np.asarray(X, dtype=float)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.mean


@dataclass
class TrainedModel:
    """Base for fitted models; subclasses implement ``_score(Z)``."""

    family: str = ""
    hyperparams: dict = field(default_factory=dict)
    scaler: Optional[Scaler] = None
    importance: Optional[np.ndarray] = None

    def score_standardized(self, Z) -> np.ndarray:
        return self._score(np.atleast_2d(np.asarray(Z, dtype=float)))

    def score(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.scaler is not None:
            X = self.scaler.transform(X)
        return self._score(X)

    def _score(self, Z):
        raise NotImplementedError

    def _params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        doc = {"family": self.family, "hyperparams": self.hyperparams}
        if self.scaler is not None:
            doc["standardization"] = {"mean": self.scaler.mean.tolist(),
                                      "std": self.scaler.scale.tolist()}
        if self.importance is not None:
            doc["importance"] = self.importance.tolist()
        doc["params"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                         for k, v in self._params().items()}
        return doc


def check_training_data(data: Dataset) -> None:
    if not np.isfinite(data.X).all():
        raise ValidationError("features contain non-finite values")
    n_neg, n_pos = data.class_counts()
    if n_neg == 0 or n_pos == 0:
        raise DegenerateLabelsError("training labels contain a single class")


def sigmoid(z):
    return expit(np.asarray(z, dtype=float))
