"""
Sampling network weights with Hamiltonian Monte Carlo
======================================================

A one-hidden-layer network is fitted to noisy samples of a sine curve and
the posterior over its weights is explored with HMC.  The spread of the
sampled functions widens away from the data.
"""

import numpy as np

from bnn_severity import hmc
from bnn_severity.bayes import BayesSpec
from bnn_severity.diagnostics import summarize
from bnn_severity.hmc import HmcConfig
from bnn_severity.network import Architecture, DesignMatrix

###########################################################################
# Thirty noisy observations on [-2, 2].

rng = np.random.default_rng(0)
x = rng.uniform(-2, 2, size=(30, 1))
y = np.sin(1.5 * x[:, 0]) + rng.normal(0, 0.1, 30)
data = DesignMatrix(x, y)

###########################################################################
# Eight tanh units, unit prior precision on every layer and the true
# noise variance.

arch = Architecture(1, (8,))
spec = BayesSpec.tied(arch, 1.0, 0.01)
config = HmcConfig(step_size=0.01, leapfrog_steps=100, num_samples=1000, burn_in=300, seed=1)
chain = hmc.run_chain(arch, spec, data, config)
print(summarize(chain))

###########################################################################
# Individual weights mix slowly (hidden units can swap roles), so the
# smallest per-weight ESS is low; the predictive distribution below is far
# more stable than any single weight.

###########################################################################
# Predictive mean and standard deviation inside and outside the data range.

grid = np.linspace(-4, 4, 9)[:, None]
pred = hmc.predict(arch, spec, chain, grid)
for g, m, v in zip(grid[:, 0], pred.mean, pred.variance):
    print(f"x = {g:+.1f}   mean {m:+.3f}   sd {np.sqrt(v):.3f}   truth {np.sin(1.5 * g):+.3f}")
