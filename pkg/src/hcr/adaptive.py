"""
Coefficient estimation for non-stationary series.

Two routes are offered:

* exponential forgetting, ``a^{t+1} = lam * a^t + (1 - lam) * f(x^t)``, which
  is causal and suitable for online prediction;
* a time trend, where rescaled time is an extra coordinate of the windows,
  so every coefficient becomes a polynomial in time.  This one uses the
  whole history, future included.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import signal

from .errors import DomainError, InsufficientDataError, ShapeError
from .estimate import (
    CLAMP_EPS,
    CoefficientTensor,
    WindowSet,
    _all_indices,
    _degrees,
    build_windows,
    estimate_coefficients,
)
from .marginals import NormalizedSeries
from .polybasis import OrthoBasis, eval_basis
from .predict import Calibration, PredictionBatch

logger = logging.getLogger(__name__)

# Learning rates used as presets in the CLI.
LAMBDA_PRESETS = {"fast": 0.999, "slow": 0.9997}

__all__ = [
    "AdaptiveRun",
    "AdaptiveState",
    "LAMBDA_PRESETS",
    "TrendTensor",
    "adaptive_update",
    "fit_time_trend",
    "run_adaptive",
    "time_grid",
]


@dataclass(frozen=True)
class AdaptiveState:
    """Exponentially weighted coefficients after ``step`` updates."""

    lam: float
    step: int
    degrees: tuple
    indices: np.ndarray = field(repr=False)
    coeffs: np.ndarray = field(repr=False)

    @classmethod
    def zeros(cls, lam: float, degrees, indices=None) -> "AdaptiveState":
        if not 0.0 < lam < 1.0:
            raise DomainError(f"learning rate must lie in (0, 1), got {lam}")
        degrees = tuple(int(m) for m in degrees)
        J = _all_indices(degrees) if indices is None else np.asarray(indices, dtype=np.int64)
        return cls(lam, 0, degrees, J, np.zeros(len(J)))

    @classmethod
    def from_tensor(cls, lam: float, t: CoefficientTensor) -> "AdaptiveState":
        """Warm start from previously estimated coefficients."""
        if not 0.0 < lam < 1.0:
            raise DomainError(f"learning rate must lie in (0, 1), got {lam}")
        return cls(lam, 0, t.degrees, t.indices.copy(), t.values.copy())

    def as_tensor(self) -> CoefficientTensor:
        return CoefficientTensor(self.degrees, self.indices, self.coeffs, n=self.step)


def _products(basis, X, degrees, J):
    X = np.clip(np.atleast_2d(X), CLAMP_EPS, 1.0 - CLAMP_EPS)
    V = [eval_basis(basis, X[:, i])[:, : m + 1] for i, m in enumerate(degrees)]
    P = V[0][:, J[:, 0]]
    for i in range(1, len(degrees)):
        P = P * V[i][:, J[:, i]]
    return P


def adaptive_update(state: AdaptiveState, window, basis: OrthoBasis) -> AdaptiveState:
    """One step of ``a <- lam * a + (1 - lam) * f(window)`` for every index."""
    window = np.asarray(window, dtype=float).reshape(1, -1)
    if window.shape[1] != len(state.degrees):
        raise ShapeError(f"window of length {window.shape[1]} for d={len(state.degrees)}")
    f = _products(basis, window, state.degrees, state.indices)[0]
    lam = state.lam
    return AdaptiveState(lam, state.step + 1, state.degrees, state.indices,
                         lam * state.coeffs + (1.0 - lam) * f)


@dataclass
class AdaptiveRun:
    """
    Result of :func:`run_adaptive`.

    ``predictions[t]`` is the conditional density of window ``t``'s current
    value, built from coefficients that saw only windows ``0..t-1``.
    ``snapshots[i]`` holds the coefficients after ``steps[i]`` updates.
    """

    lam: float
    degrees: tuple
    indices: np.ndarray
    steps: np.ndarray
    snapshots: np.ndarray
    predictions: PredictionBatch
    burn_in: np.ndarray
    final: AdaptiveState

    def trajectory(self, j) -> np.ndarray:
        """Snapshot values of the coefficient with multi-index ``j``."""
        j = tuple(j)
        hit = np.flatnonzero(np.all(self.indices == np.asarray(j), axis=1))
        if hit.size == 0:
            raise KeyError(j)
        return self.snapshots[:, hit[0]]

    def snapshot_rows(self, select: Optional[Sequence] = None):
        """Rows ``(t, j_1, ..., j_d, a_j^t)`` for export."""
        J = self.indices if select is None else np.asarray(select, dtype=np.int64)
        cols = [np.flatnonzero(np.all(self.indices == j, axis=1))[0] for j in J]
        for s, row in zip(self.steps, self.snapshots):
            for j, c in zip(J, cols):
                yield (int(s), *map(int, j), float(row[c]))


def run_adaptive(x, d: int, m, lam: float, basis: OrthoBasis, stride: int = 1,
                 warm_start: Optional[CoefficientTensor] = None,
                 calibration: Optional[Calibration] = None) -> AdaptiveRun:
    """
    Run exponential forgetting over all windows of ``x``.

    Parameters
    ----------
    x : NormalizedSeries or array_like
    d : int
        Window dimension (1 + context length).
    m : int or sequence of int
        Per-coordinate degrees.
    lam : float
        Learning rate in (0, 1); the effective memory is ``1 / (1 - lam)``.
    stride : int
        Keep every ``stride``-th state in ``snapshots`` (plus the last).
    warm_start : CoefficientTensor, optional
        Initial coefficients; the default is all zeros.

    Notes
    -----
    With the zero start the coefficients are biased towards 0 by the factor
    ``1 - lam^t``; conditioning divides by ``b_0`` and so removes it from the
    predictions.  Windows with ``t < 1 / (1 - lam)`` are flagged as burn-in.
    """
    w = x if isinstance(x, WindowSet) else build_windows(x, d)
    n = w.n
    if n < 2:
        raise InsufficientDataError("adaptive run needs more values than the window length")
    if not 0.0 < lam < 1.0:
        raise DomainError(f"learning rate must lie in (0, 1), got {lam}")
    degrees = _degrees(m, w.d, basis)
    if warm_start is not None:
        if tuple(warm_start.degrees) != degrees:
            raise ShapeError("warm start degrees differ from requested degrees")
        state0 = AdaptiveState.from_tensor(lam, warm_start)
    else:
        state0 = AdaptiveState.zeros(lam, degrees)
    J = state0.indices
    k = len(J)
    m1 = degrees[0]
    S = np.zeros((k, m1 + 1))
    S[np.arange(k), J[:, 0]] = 1.0
    ctx_only = J.copy()
    ctx_only[:, 0] = 0

    stride = max(int(stride), 1)
    keep = np.unique(np.r_[np.arange(stride, n + 1, stride), n])
    snaps = np.empty((keep.size, k))
    B = np.empty((n, m1 + 1))

    zi = lam * state0.coeffs
    prev = state0.coeffs
    chunk = max(1, 2 ** 20 // max(k, 1))
    si = 0
    for s in range(0, n, chunk):
        rows = w.vectors[s:s + chunk]
        F = _products(basis, rows, degrees, J)
        A_after, zf = signal.lfilter([1.0 - lam], [1.0, -lam], F, axis=0, zi=zi[None, :])
        zi = zf[0]
        A_before = np.vstack([prev[None, :], A_after[:-1]])
        prev = A_after[-1]
        # context factor of every index: products over coordinates 2..d only
        ctx = _products(basis, rows, degrees, ctx_only) if w.d > 1 else np.ones_like(F)
        B[s:s + len(rows)] = (A_before * ctx) @ S
        steps = np.arange(s + 1, s + len(rows) + 1)
        sel = np.isin(steps, keep)
        snaps[si:si + sel.sum()] = A_after[sel]
        si += int(sel.sum())

    b0 = B[:, 0].copy()
    bad = ~(b0 > 0)
    B[~bad] /= b0[~bad, None]
    B[bad] = 0.0
    B[bad, 0] = 1.0
    preds = PredictionBatch(B, b0, bad, actual=np.clip(w.current.copy(), 0.0, 1.0))
    preds.meta["lam"] = lam
    if calibration is not None:
        preds.meta["calibration"] = calibration.to_dict()
    burn = np.arange(n) < 1.0 / (1.0 - lam)
    final = AdaptiveState(lam, state0.step + n, degrees, J, prev.copy())
    return AdaptiveRun(lam, degrees, J, keep, snaps, preds, burn, final)


def time_grid(n: int) -> np.ndarray:
    """Rescaled time ``(t - 1/2) / n`` for ``t = 1..n``; strictly inside (0, 1)."""
    return (np.arange(n) + 0.5) / n


@dataclass
class TrendTensor:
    """
    Coefficients over ``(time, x_1, ..., x_d)``; coordinate 0 is rescaled time.
    """

    tensor: CoefficientTensor
    basis: OrthoBasis = field(repr=False)

    @property
    def time_degree(self) -> int:
        return self.tensor.degrees[0]

    def _time_values(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if np.any(tau < 0) or np.any(tau > 1):
            warnings.warn("extrapolating a polynomial time trend outside [0, 1]", stacklevel=3)
        C = self.basis.coeffs[: self.time_degree + 1]
        return np.stack([np.polynomial.polynomial.polyval(tau, c) for c in C], axis=-1)

    def at(self, tau: float) -> CoefficientTensor:
        """Slice the trend at rescaled time ``tau``: ``a_j(tau) = sum_k a_(k,j) f_k(tau)``."""
        ft = self._time_values(tau)[0]
        t = self.tensor
        rest = t.indices[:, 1:]
        shape = tuple(mm + 1 for mm in t.degrees[1:])
        flat = np.ravel_multi_index(tuple(rest.T), shape)
        uniq, inv = np.unique(flat, return_inverse=True)
        vals = np.zeros(uniq.size)
        np.add.at(vals, inv, t.values * ft[t.indices[:, 0]])
        idx = np.stack(np.unravel_index(uniq, shape), axis=1)
        return CoefficientTensor(t.degrees[1:], idx, vals, n=t.n)

    def path(self, j, tau) -> np.ndarray:
        """Coefficient ``a_j`` as a function of rescaled time, evaluated at ``tau``."""
        ft = self._time_values(tau)
        return sum(self.tensor.get((k, *j)) * ft[:, k] for k in range(self.time_degree + 1))


def fit_time_trend(x, time_degree: int, basis: OrthoBasis, d: int = 1, degrees=None,
                   index_filter=None) -> TrendTensor:
    """
    Estimate coefficients over windows augmented with rescaled time.

    ``x`` is a NormalizedSeries, a 1-D array (windowed with ``d``) or a
    WindowSet.  ``degrees`` applies to the value coordinates.
    """
    if isinstance(x, WindowSet):
        w = x
    elif isinstance(x, NormalizedSeries) or np.ndim(x) == 1:
        w = build_windows(x, d)
    else:
        w = WindowSet(np.asarray(x, dtype=float))
    if not 0 <= time_degree <= basis.max_degree:
        raise DomainError(f"time degree {time_degree} outside basis degree {basis.max_degree}")
    vals = _degrees(degrees, w.d, basis)
    aug = np.column_stack([time_grid(w.n), w.vectors])
    t = estimate_coefficients(aug, basis, (time_degree, *vals), index_filter=index_filter)
    return TrendTensor(t, basis)
