"""
Predictive uncertainty from MC dropout
======================================

A network is trained with dropout on its hidden units; at prediction time
dropout stays on and many stochastic passes are averaged.  The variance of
those passes plus the noise variance is the predictive variance.
"""

import numpy as np

from bnn_severity import dropout
from bnn_severity.bayes import BayesSpec
from bnn_severity.dropout import DropoutConfig, TrainingLog
from bnn_severity.network import Architecture, DesignMatrix

rng = np.random.default_rng(3)
x = rng.uniform(-2, 2, size=(200, 1))
y = 0.5 * x[:, 0] ** 2 + rng.normal(0, 0.2, 200)
data = DesignMatrix(x, y)

arch = Architecture(1, (50,))
spec = BayesSpec.tied(arch, 1.0, 0.04)

###########################################################################
# Training reports the full-data objective after every epoch.

config = DropoutConfig(dropout_rate=0.1, t_samples=500, epochs=150, learning_rate=1e-2, seed=0)
log = TrainingLog()
params = dropout.train(arch, spec, data, config, log=log)
print("objective, first and last epoch:", round(log.epoch_losses[0], 3), round(log.epoch_losses[-1], 3))

###########################################################################
# With rate 0 every pass is identical and only the noise variance remains.

grid = np.array([[-3.0], [0.0], [1.0], [3.0]])
for rate in (0.0, 0.1):
    pred = dropout.predict(arch, spec, params, grid, DropoutConfig(dropout_rate=rate, t_samples=500))
    print(f"rate {rate}: mean {np.round(pred.mean, 2)}  variance {np.round(pred.variance, 3)}")
