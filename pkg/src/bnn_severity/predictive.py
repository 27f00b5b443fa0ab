from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class PredictiveDistribution:
    """Per-point predictive mean and variance plus the raw function draws.

    ``samples`` has shape ``(S, N)``: one row per posterior draw or dropout
    mask.  ``variance`` already includes the observation noise.
    """

    mean: np.ndarray
    variance: np.ndarray
    samples: np.ndarray
    noise_variance: float

    def __len__(self):
        return self.mean.shape[0]

    @classmethod
    def from_samples(cls, samples, noise_variance):
        samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        mean = samples.mean(axis=0)
        if samples.shape[0] > 1:
            spread = samples.var(axis=0, ddof=1)
        else:
            spread = np.zeros(samples.shape[1])
        return cls(mean, noise_variance + spread, samples, float(noise_variance))

    def shifted(self, offset):
        """The same distribution translated by a constant ``offset``."""
        return PredictiveDistribution(self.mean + offset, self.variance, self.samples + offset, self.noise_variance)
