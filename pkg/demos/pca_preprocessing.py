"""
From hundreds of features to five components
============================================

Features are z-scored with training statistics and projected onto their
leading principal axes.  The same fitted transform is applied to new rows.
"""

import numpy as np

from bnn_severity.data import CohortSpec, generate_cohort
from bnn_severity.preprocess import fit_preprocessor

data, latent = generate_cohort(CohortSpec(seed=0), return_latent=True)
train, test = np.arange(150), np.arange(150, 188)

###########################################################################
# Fit on the training rows only.

pre = fit_preprocessor(data.X[train], k=5, whiten=True)
print("explained variance of the five components:", np.round(pre.pca.explained_variance, 2))

Z_train = pre.transform(data.X[train])
Z_test = pre.transform(data.X[test])
print("whitened training scores: mean", np.round(Z_train.mean(axis=0), 12), "std", np.round(Z_train.std(axis=0), 6))

###########################################################################
# The cohort was generated from five latent factors; the components span
# them almost exactly.

A = np.hstack([Z_test, np.ones((len(test), 1))])
coef, *_ = np.linalg.lstsq(A, latent[test], rcond=None)
resid = latent[test] - A @ coef
print("fraction of latent variance left unexplained on test rows:",
      np.round(resid.var(axis=0) / latent[test].var(axis=0), 4))
