"""Fit each classifier family on a synthetic cohort and look inside."""

import numpy as np

from ctoutcomes.classifiers import (Dataset, fit_adaboost, fit_gbt, fit_logistic_l1,
                                    fit_random_forest, fit_svm_rbf, smote)
from ctoutcomes.evaluation import auc_score
from ctoutcomes.features import FEATURE_NAMES
from ctoutcomes.phantom import synthetic_feature_table

table = synthetic_feature_table(n=244, seed=0, prevalence=0.3)
data = Dataset(table.X, table.outcome_icu.astype(int), table.patient_ids)
print("class counts (neg, pos):", data.class_counts())

# SMOTE fills the minority class up to the majority count with interpolated rows
balanced = smote(data, k=5, seed=0)
print("after SMOTE:", balanced.class_counts())

# Hold out a third for a quick look at held-out AUC
idx = np.random.default_rng(0).permutation(len(data))
test, train = data.subset(idx[:80]), smote(data.subset(idx[80:]), seed=0)

logit = fit_logistic_l1(train, c=1.0)
print("\nL1 logistic: %d of %d weights are zero" % ((logit.weights == 0).sum(), len(logit.weights)))
for name, w in zip(FEATURE_NAMES, logit.weights):
    if w != 0:
        print("  %-10s %+.3f" % (name, w))

svm = fit_svm_rbf(train, gamma=0.1, c=1.0)
print("\nSVM: %d support vectors, %d SMO iterations" % (len(svm.coef), svm.n_iter))

forest = fit_random_forest(train, n_trees=100, seed=0)
print("\nforest Gini importance:")
for k in np.argsort(-forest.importance)[:5]:
    print("  %-10s %.3f" % (FEATURE_NAMES[k], forest.importance[k]))

ada = fit_adaboost(train, n_estimators=50, learning_rate=1.0)
print("\nAdaBoost kept %d stumps; first split on %s" % (len(ada.alphas),
                                                       FEATURE_NAMES[ada.features[0]]))

gbt = fit_gbt(train, max_depth=3, n_rounds=100, learning_rate=0.1)
print("\nGBT training log-loss: %.4f -> %.4f" % (gbt.train_loss[0], gbt.train_loss[-1]))

print("\nheld-out AUC")
for model in (logit, svm, forest, ada, gbt):
    print("  %-14s %.3f" % (model.family, auc_score(model.score(test.X), test.y)))
