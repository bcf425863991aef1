"""Synthetic return series shared by tests and the acceptance module."""

import math

import numpy as np
from scipy import special

from hcr.marginals import MarginalModel


def arch_epd_returns(n, alpha=0.4, omega=1e-4, kappa=0.9, seed=0, burn=100):
    """
    Returns ``y_t = sqrt(omega + alpha y_{t-1}^2) e_t`` with unit-variance
    EPD(kappa) innovations ``e_t``: heavy tails plus volatility clustering.
    """
    rng = np.random.default_rng(seed)
    e = MarginalModel("epd", 0.0, 1.0, kappa).sample(n + burn, rng)
    e /= math.sqrt(kappa ** (2 / kappa) * special.gamma(3 / kappa) / special.gamma(1 / kappa))
    y = np.zeros(n + burn)
    for t in range(1, n + burn):
        y[t] = math.sqrt(omega + alpha * y[t - 1] ** 2) * e[t]
    return y[burn:]


def arch_gaussian_returns(n, alpha0, alpha1, seed=0, burn=100):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n + burn)
    y = np.zeros(n + burn)
    for t in range(1, n + burn):
        y[t] = math.sqrt(alpha0 + alpha1 * y[t - 1] ** 2) * e[t]
    return y[burn:]
