"""Chain diagnostics: autocorrelation, effective sample size, Monte Carlo error."""

from __future__ import annotations

import numpy as np


def autocorrelation(x) -> np.ndarray:
    """Normalised autocorrelation of a 1-D series, computed by FFT."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    if acov[0] == 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(x) -> float:
    """ESS using Geyer's initial monotone positive sequence truncation."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 4:
        return float(n)
    rho = autocorrelation(x)
    # sums of adjacent pairs are positive and decreasing for a reversible chain
    pairs = rho[: n - n % 2].reshape(-1, 2).sum(axis=1)
    tau = -1.0
    prev = np.inf
    for gamma in pairs:
        if gamma <= 0:
            break
        gamma = min(gamma, prev)
        tau += 2.0 * gamma
        prev = gamma
    tau = max(tau, 1.0 / np.log10(n)) if tau > 0 else 1.0
    return float(n / tau)


def batch_means_se(x, n_batches=None) -> np.ndarray:
    """Monte Carlo standard error of the mean of each column via batch means."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    n = x.shape[0]
    if n_batches is None:
        n_batches = max(2, int(np.sqrt(n)))
    size = n // n_batches
    if size < 1:
        raise ValueError("too few samples for the requested number of batches")
    means = x[: size * n_batches].reshape(n_batches, size, -1).mean(axis=1)
    se = means.std(axis=0, ddof=1) / np.sqrt(n_batches)
    return se[0] if squeeze else se


def summarize(chain) -> dict:
    """Acceptance, divergences and the smallest per-coordinate ESS of a chain."""
    ess = [effective_sample_size(col) for col in np.asarray(chain.samples).T] if len(chain) > 3 else [float(len(chain))]
    return {
        "n_samples": len(chain),
        "acceptance_rate": float(chain.acceptance_rate),
        "n_divergent": int(chain.n_divergent),
        "step_size": float(chain.step_size),
        "min_ess": float(min(ess)),
        "median_ess": float(np.median(ess)),
    }
