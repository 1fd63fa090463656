"""From-scratch binary classifiers used for outcome prediction."""

from .base import (DEFAULT_GRIDS, FAMILIES, Dataset, ModelSpec, Scaler, TrainedModel,
                   check_training_data, sigmoid)
from .boosting import AdaBoostModel, GBTModel, fit_adaboost, fit_gbt
from .logistic import LogisticModel, fit_logistic_l1
from .smote import smote
from .svm import SVMModel, dual_objective, fit_svm_rbf, rbf_kernel
from .trees import (RandomForestModel, Tree, fit_random_forest, gini_feature_importance,
                    gini_impurity, grow_tree, presort)

STANDARDIZED_FAMILIES = ("logistic_l1", "svm_rbf")


def fit_model(family: str, data: Dataset, params: dict, seed=0, scaler: Scaler = None,
              order=None):
    """Fit ``family`` with hyperparameters ``params``.

    ``scaler`` is used by the scale-sensitive families; tree ensembles see raw features.
    ``order`` is an optional ``presort(data.X)`` shared by the boosted families.
    """
    if family == "logistic_l1":
        return fit_logistic_l1(data, scaler=scaler, **params)
    if family == "svm_rbf":
        return fit_svm_rbf(data, scaler=scaler, **params)
    if family == "random_forest":
        return fit_random_forest(data, seed=seed, **params)
    if family == "adaboost":
        return fit_adaboost(data, seed=seed, order=order, **params)
    if family == "gbt":
        return fit_gbt(data, seed=seed, order=order, **params)
    raise ValueError(f"unknown family {family!r}")
