"""Small numeric helpers shared across modules."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

# Strict interior of (0, 1) reachable in float64.
P_LO = np.finfo(float).tiny
P_HI = 1.0 - np.finfo(float).epsneg


def golden_section(fun, lo, hi, tol=1e-4, max_iter=200):
    """
    Minimize a unimodal scalar function on ``[lo, hi]``.

    Returns ``(x_best, f_best, converged)``.  Non-finite objective values are
    treated as +inf so the search moves away from them.
    """

    def f(x):
        v = fun(x)
        return v if np.isfinite(v) else math.inf

    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while abs(b - a) > tol and it < max_iter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
        it += 1
    x = c if fc <= fd else d
    return x, min(fc, fd), abs(b - a) <= tol


@lru_cache(maxsize=8)
def gauss_legendre_unit(npts: int = 256):
    """Nodes and weights of the ``npts``-point Gauss-Legendre rule on [0, 1]."""
    t, w = np.polynomial.legendre.leggauss(npts)
    nodes = 0.5 * (t + 1.0)
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights
