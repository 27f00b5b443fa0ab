"""
Checking a chain
================

Autocorrelation, effective sample size and batch-means standard errors for
an HMC chain on a correlated Gaussian whose moments are known.
"""

import numpy as np

from bnn_severity import hmc
from bnn_severity.diagnostics import autocorrelation, batch_means_se, effective_sample_size
from bnn_severity.hmc import HmcConfig

cov = np.array([[1.0, 0.8], [0.8, 1.0]])
prec = np.linalg.inv(cov)

for step in (0.05, 0.2):
    config = HmcConfig(step_size=step, leapfrog_steps=10, num_samples=5000, burn_in=500, seed=0,
                       adapt_step_size=False)
    chain = hmc.sample(lambda q: 0.5 * q @ prec @ q, lambda q: prec @ q, np.zeros(2), config)
    x = chain.samples
    print(f"step {step}: acceptance {chain.acceptance_rate:.3f}")
    print("   lag-1..3 autocorrelation", np.round(autocorrelation(x[:, 0])[1:4], 3))
    print("   ESS per coordinate      ", [round(effective_sample_size(c)) for c in x.T])
    print("   mean +/- batch-means SE ", np.round(x.mean(axis=0), 3), np.round(batch_means_se(x), 3))
