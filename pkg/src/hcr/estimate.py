"""
Joint density estimation for (value, context) windows.

A window ``x^t = (x^t, x^{t-1}, ..., x^{t-d+1})`` lives in ``[0, 1]^d``.  Its
density is modelled as ``rho(x) = sum_j a_j f_{j_1}(x_1) ... f_{j_d}(x_d)``
and mean-square optimal coefficients are plain sample averages,
``a_j = mean_t prod_i f_{j_i}(x_i^t)``.

Multi-indices are ordered lexicographically with coordinate 1 (the current
value) most significant, i.e. C order over an array of shape
``(m_1 + 1, ..., m_d + 1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import DomainError, InsufficientDataError, ShapeError
from .marginals import NormalizedSeries
from .polybasis import OrthoBasis, eval_basis

CLAMP_EPS = 1e-12
DENSE_LIMIT = 2 ** 20
# Fixed row chunk: reductions are then bitwise reproducible across index layouts.
ROW_CHUNK = 128

IndexFilter = Callable[[tuple], bool]

__all__ = [
    "CoefficientTensor",
    "WindowSet",
    "build_windows",
    "estimate_coefficients",
    "eval_joint_density",
    "noise_sigma",
    "pairwise_only",
    "prune",
    "total_degree_at_most",
]


@dataclass
class WindowSet:
    """Rows ``(x^t, x^{t-1}, ..., x^{t-d+1})``; column 0 is the current value."""

    vectors: np.ndarray

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def current(self) -> np.ndarray:
        return self.vectors[:, 0]

    @property
    def context(self) -> np.ndarray:
        return self.vectors[:, 1:]


def build_windows(x, d: int) -> WindowSet:
    """
    Stack each value with its ``d - 1`` predecessors.

    >>> build_windows([0.1, 0.2, 0.3], 2).vectors
    array([[0.2, 0.1],
           [0.3, 0.2]])
    """
    arr = np.asarray(x.x if isinstance(x, NormalizedSeries) else x, dtype=float)
    if arr.ndim != 1:
        raise ShapeError("build_windows expects a one-dimensional series")
    if d < 1:
        raise DomainError("window dimension must be at least 1")
    if arr.size < d:
        raise InsufficientDataError(f"series of length {arr.size} shorter than d={d}")
    view = np.lib.stride_tricks.sliding_window_view(arr, d)
    return WindowSet(np.ascontiguousarray(view[:, ::-1]))


def noise_sigma(n: int) -> float:
    """Standard error ``1/sqrt(n)`` of a coefficient under the uniform null."""
    if n < 1:
        raise DomainError("noise level needs n >= 1")
    return 1.0 / math.sqrt(n)


def pairwise_only(max_nonzero: int = 2) -> IndexFilter:
    """Admit multi-indices with at most ``max_nonzero`` nonzero entries."""
    return lambda j: sum(1 for v in j if v) <= max_nonzero


def total_degree_at_most(D: int) -> IndexFilter:
    """Admit multi-indices with ``sum(j) <= D``."""
    return lambda j: sum(j) <= D


@dataclass
class CoefficientTensor:
    """
    Coefficients ``a_j`` over a (possibly sparse) set of multi-indices.

    Attributes
    ----------
    degrees : tuple of int
        Per-coordinate maximal degree ``m_i``.
    indices : ndarray of int, shape (k, d)
        Admitted multi-indices in canonical order.
    values : ndarray, shape (k,)
    n : int
        Number of samples the coefficients were averaged over.
    dropped : int
        Entries removed by pruning so far.
    """

    degrees: tuple
    indices: np.ndarray
    values: np.ndarray
    n: int = 0
    dropped: int = 0

    def __post_init__(self):
        self.degrees = tuple(int(m) for m in self.degrees)
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1, len(self.degrees))
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.indices.shape[0] != self.values.shape[0]:
            raise ShapeError("indices and values differ in length")
        order = np.argsort(self.flat_indices(), kind="stable")
        if np.any(order != np.arange(order.size)):
            self.indices = self.indices[order]
            self.values = self.values[order]

    @property
    def d(self) -> int:
        return len(self.degrees)

    @property
    def shape(self) -> tuple:
        return tuple(m + 1 for m in self.degrees)

    @property
    def basis_size(self) -> int:
        return math.prod(self.shape)

    @property
    def is_dense(self) -> bool:
        return self.values.size == self.basis_size

    def __len__(self):
        return self.values.size

    def flat_indices(self) -> np.ndarray:
        if self.indices.size == 0:
            return np.zeros(0, dtype=np.int64)
        return np.ravel_multi_index(tuple(self.indices.T), self.shape)

    def get(self, j, default=0.0) -> float:
        """Coefficient for multi-index ``j`` (a tuple or a digit string like ``"200200"``)."""
        if isinstance(j, str):
            j = tuple(int(c) for c in j)
        if len(j) != self.d:
            raise ShapeError(f"multi-index of length {len(j)} for d={self.d}")
        if any(not 0 <= v <= m for v, m in zip(j, self.degrees)):
            return default
        flat = np.ravel_multi_index(tuple(j), self.shape)
        pos = np.searchsorted(self.flat_indices(), flat)
        if pos < len(self) and self.flat_indices()[pos] == flat:
            return float(self.values[pos])
        return default

    def to_dense(self) -> np.ndarray:
        if self.basis_size > DENSE_LIMIT:
            raise ShapeError(f"basis of size {self.basis_size} too large for dense storage")
        out = np.zeros(self.shape)
        out[tuple(self.indices.T)] = self.values
        return out

    def scaled(self, alpha: float) -> "CoefficientTensor":
        return CoefficientTensor(self.degrees, self.indices.copy(), alpha * self.values,
                                 self.n, self.dropped)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "degrees": list(self.degrees),
            "n": int(self.n),
            "dropped": int(self.dropped),
            "entries": [[[int(v) for v in j], float(a)]
                        for j, a in zip(self.indices, self.values)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientTensor":
        entries = d["entries"]
        idx = np.array([e[0] for e in entries], dtype=np.int64).reshape(-1, d["d"])
        vals = np.array([e[1] for e in entries], dtype=float)
        return cls(tuple(d["degrees"]), idx, vals, d.get("n", 0), d.get("dropped", 0))

    @classmethod
    def from_json(cls, s: str) -> "CoefficientTensor":
        return cls.from_dict(json.loads(s))


def _degrees(degrees, d, basis: OrthoBasis) -> tuple:
    if degrees is None:
        degrees = basis.max_degree
    if np.ndim(degrees) == 0:
        degrees = (int(degrees),) * d
    degrees = tuple(int(m) for m in degrees)
    if len(degrees) != d:
        raise ShapeError(f"{len(degrees)} degrees given for dimension {d}")
    if any(m < 0 or m > basis.max_degree for m in degrees):
        raise DomainError(f"degrees {degrees} exceed basis degree {basis.max_degree}")
    return degrees


def _all_indices(degrees) -> np.ndarray:
    shape = tuple(m + 1 for m in degrees)
    return np.indices(shape).reshape(len(shape), -1).T


def _basis_values(basis, X, degrees):
    Xc = np.clip(X, CLAMP_EPS, 1.0 - CLAMP_EPS)
    return [eval_basis(basis, Xc[:, i])[:, : m + 1] for i, m in enumerate(degrees)]


def estimate_coefficients(
    w: Union[WindowSet, np.ndarray],
    basis: OrthoBasis,
    degrees: Union[int, Sequence[int], None] = None,
    index_filter: Optional[IndexFilter] = None,
    indices: Optional[np.ndarray] = None,
) -> CoefficientTensor:
    """
    Estimate ``a_j = mean_t prod_i f_{j_i}(x_i^t)``.

    Parameters
    ----------
    w : WindowSet or ndarray of shape (n, d)
    basis : OrthoBasis
    degrees : int or sequence of int, optional
        Per-coordinate maximal degree; defaults to ``basis.max_degree``.
    index_filter : callable, optional
        Predicate on multi-index tuples, e.g. :func:`pairwise_only`.
    indices : ndarray of shape (k, d), optional
        Explicit multi-index list; overrides ``index_filter``.

    Returns
    -------
    CoefficientTensor
    """
    X = np.asarray(w.vectors if isinstance(w, WindowSet) else w, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if n < 1:
        raise InsufficientDataError("no windows to estimate from")
    degrees = _degrees(degrees, d, basis)
    V = _basis_values(basis, X, degrees)

    if indices is None:
        J = _all_indices(degrees)
        if index_filter is not None:
            J = J[np.fromiter((bool(index_filter(tuple(int(v) for v in j))) for j in J),
                              dtype=bool, count=len(J))]
        dense = index_filter is None
    else:
        J = np.asarray(indices, dtype=np.int64).reshape(-1, d)
        if np.any(J < 0) or np.any(J > np.asarray(degrees)):
            raise DomainError("explicit indices exceed degrees")
        dense = False

    total = np.zeros(len(J))
    for s in range(0, n, ROW_CHUNK):
        if dense:
            P = V[0][s:s + ROW_CHUNK]
            for Vi in V[1:]:
                blk = Vi[s:s + ROW_CHUNK]
                P = (P[:, :, None] * blk[:, None, :]).reshape(P.shape[0], -1)
        else:
            P = V[0][s:s + ROW_CHUNK][:, J[:, 0]]
            for i in range(1, d):
                P = P * V[i][s:s + ROW_CHUNK][:, J[:, i]]
        total += P.sum(axis=0)
    return CoefficientTensor(degrees, J, total / n, n=n)


def prune(t: CoefficientTensor, threshold: float, n: Optional[int] = None) -> CoefficientTensor:
    """
    Drop coefficients with ``|a_j| < threshold / sqrt(n)``.

    The all-zero index is always kept.  ``n`` defaults to the sample size the
    tensor was estimated from.
    """
    if threshold < 0:
        raise DomainError("threshold must be nonnegative")
    n = t.n if n is None else n
    cut = threshold * noise_sigma(n)
    keep = (np.abs(t.values) >= cut) | np.all(t.indices == 0, axis=1)
    return CoefficientTensor(t.degrees, t.indices[keep], t.values[keep], t.n,
                             t.dropped + int(np.count_nonzero(~keep)))


def eval_joint_density(t: CoefficientTensor, basis: OrthoBasis, point) -> Union[float, np.ndarray]:
    """
    Evaluate ``sum_j a_j prod_i f_{j_i}(point_i)``.

    ``point`` has shape ``(d,)`` or ``(N, d)``.  Values can be negative.
    """
    P = np.asarray(point, dtype=float)
    single = P.ndim == 1
    P = np.atleast_2d(P)
    if P.shape[1] != t.d:
        raise ShapeError(f"point of dimension {P.shape[1]} for tensor of dimension {t.d}")
    V = [eval_basis(basis, P[:, i])[:, : m + 1] for i, m in enumerate(t.degrees)]
    out = np.zeros(P.shape[0])
    step = max(1, 2 ** 22 // max(len(t), 1))
    for s in range(0, P.shape[0], step):
        prod = V[0][s:s + step][:, t.indices[:, 0]]
        for i in range(1, t.d):
            prod = prod * V[i][s:s + step][:, t.indices[:, i]]
        out[s:s + step] = prod @ t.values
    return float(out[0]) if single else out
