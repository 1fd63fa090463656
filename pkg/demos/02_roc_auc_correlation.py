"""ROC curves, AUC as a pairwise statistic, and point-biserial correlation."""

import numpy as np

from ctoutcomes.evaluation import auc, correlations, point_biserial, roc_points
from ctoutcomes.phantom import synthetic_feature_table

# One ROC point per distinct score, highest first
scores = [0.9, 0.8, 0.7, 0.1]
labels = [1, 0, 1, 0]
curve = roc_points(scores, labels)
print("ROC points:", curve.points)
print("AUC:", auc(curve))

# The trapezoidal area is the fraction of (positive, negative) pairs ranked correctly,
# with tied pairs counted as one half
rng = np.random.default_rng(1)
s = rng.integers(0, 5, 40).astype(float)
y = rng.integers(0, 2, 40)
pos, neg = s[y == 1], s[y == 0]
pairs = (pos[:, None] > neg[None, :]).mean() + 0.5 * (pos[:, None] == neg[None, :]).mean()
print("AUC %.6f  pairwise %.6f" % (auc(roc_points(s, y)), pairs))

# Only ranks matter: any increasing map of the scores leaves the curve alone
print("after exp():", auc(roc_points(np.exp(s), y)))

# Point-biserial correlation is Pearson's r against a 0/1 outcome
print("r([1,2,3,4], [0,0,1,1]) = %.6f" % point_biserial([1, 2, 3, 4], [0, 0, 1, 1]))

# On the synthetic cohort the planted signs come back out
table = synthetic_feature_table(n=244, seed=0)
for name, r in correlations(table.X, table.outcome_icu).items():
    print("  %-10s %+.3f" % (name, r))
