# coding: utf-8

# # Precision-recall under heavy imbalance
#
# With 1-2% positives, ROC curves flatter every model. The PR curve here puts
# one point at each distinct score (tied scores enter together), starts from
# an anchor at recall 0, and is integrated with the trapezoidal rule.

# In[1]:

import numpy as np

from raregan.evaluation import average_pr_auc, pr_auc, pr_curve

curve = pr_curve([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])
print(curve.points())
print(pr_auc(curve))    # 19/24


# A random ranker sits at the prevalence, not at 0.5.

# In[2]:

rng = np.random.default_rng(0)
y = rng.random(20000) < 0.016
print(y.mean(), average_pr_auc(rng.random(20000), y))


# A weak but real signal lifts the curve well above that floor.

# In[3]:

scores = rng.normal(size=20000) + 2.0 * y
print(average_pr_auc(scores, y))
