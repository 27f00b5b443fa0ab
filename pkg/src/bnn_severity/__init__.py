"""Bayesian neural-network regression of a clinical severity score.

HMC and MC-dropout Bayesian networks plus a non-Bayesian baseline, evaluated
with nested cross-validation on PCA-reduced features.
"""

__version__ = "0.1.0"
