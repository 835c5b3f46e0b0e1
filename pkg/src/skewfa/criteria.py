"""Penalised-likelihood model selection criteria (smaller is better)."""

import numpy as np
from scipy.special import xlogy


def bic(loglik, m, n):
    """Bayesian information criterion ``m log n - 2 loglik``."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    return m * np.log(n) - 2.0 * loglik


def entropy(posteriors):
    """Classification entropy ``-sum z log z`` with ``0 log 0 = 0``."""
    z = np.asarray(posteriors, dtype=float)
    return float(-np.sum(xlogy(z, z)))


def icl(bic_value, posteriors):
    """Integrated completed likelihood: BIC plus twice the entropy."""
    return bic_value + 2.0 * entropy(posteriors)
