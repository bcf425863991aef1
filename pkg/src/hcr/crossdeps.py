"""
Pairwise dependencies between aligned series.

For normalized series ``x_alpha`` the mixed coefficient
``mean_t f_j1(x_alpha^t) f_j2(x_beta^t)`` is the correction of the pair's
joint density in direction ``f_j1 x f_j2``.  With ``j1 = j2 = 1`` it is
``12 mean (u - 1/2)(v - 1/2)``, i.e. Spearman's rank correlation when the
marginals are uniform.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import marginals
from .adaptive import time_grid
from .errors import AlignmentError, ContractError, DegenerateScaleError, DomainError, InsufficientDataError
from .estimate import CLAMP_EPS
from .polybasis import OrthoBasis, eval_basis

DIAGONAL_FILL = 0.0

__all__ = [
    "PairCoeffMatrix",
    "PanelFrame",
    "covariance_pca",
    "eigendecompose",
    "normalize_panel",
    "pair_coeff_matrix",
    "pair_trend_matrix",
]


@dataclass
class PanelFrame:
    """``k`` aligned series as the columns of ``values`` (shape (n, k))."""

    names: list
    values: np.ndarray
    models: Optional[list] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise AlignmentError("panel values must be a 2-D array (time, series)")
        if len(self.names) != self.values.shape[1]:
            raise AlignmentError(f"{len(self.names)} names for {self.values.shape[1]} series")

    @classmethod
    def from_series(cls, series: Sequence, names: Optional[Sequence[str]] = None) -> "PanelFrame":
        """Stack series of equal length; NormalizedSeries keep their models."""
        arrays = [np.asarray(getattr(s, "x", getattr(s, "values", s)), dtype=float) for s in series]
        names = list(names) if names is not None else [getattr(s, "name", "") or f"s{i}"
                                                       for i, s in enumerate(series)]
        lengths = {len(a) for a in arrays}
        if len(lengths) != 1:
            short = min(range(len(arrays)), key=lambda i: len(arrays[i]))
            raise AlignmentError(f"series lengths differ {sorted(lengths)}; shortest is {names[short]!r}")
        models = [getattr(s, "model", None) for s in series]
        return cls(names, np.column_stack(arrays), models if any(models) else None)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


@dataclass
class PairCoeffMatrix:
    """``k x k`` matrix of pairwise mixed coefficients for basis pair ``(j1, j2)``."""

    names: list
    matrix: np.ndarray
    j1: int
    j2: int
    trend: bool = False
    diagonal_fill: float = DIAGONAL_FILL
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["," + ",".join(self.names)]
        for name, row in zip(self.names, self.matrix):
            lines.append(name + "," + ",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def normalize_panel(prices: PanelFrame, family: str = "laplace", log_returns: bool = True,
                    threads: int = 1) -> PanelFrame:
    """Fit each column's own marginal and map it to (0, 1)."""

    def one(col):
        y = marginals.log_returns(col) if log_returns else col
        model = marginals.fit(y, family)
        return marginals.normalize(y, model).x, model

    cols = [prices.values[:, i] for i in range(prices.k)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            out = list(ex.map(one, cols))
    else:
        out = [one(c) for c in cols]
    return PanelFrame(list(prices.names), np.column_stack([o[0] for o in out]),
                      [o[1] for o in out])


def _checked(p: PanelFrame) -> np.ndarray:
    X = p.values
    if X.shape[0] < 1:
        raise InsufficientDataError("empty panel")
    if np.any(~np.isfinite(X)):
        raise AlignmentError("panel contains missing or non-finite entries")
    if np.any(X < 0) or np.any(X > 1):
        raise DomainError("pair coefficients need normalized values in [0, 1]")
    return np.clip(X, CLAMP_EPS, 1.0 - CLAMP_EPS)


def _fj(basis, X, j):
    return eval_basis(basis, X)[..., j]


def _pair_matrix(p, j1, j2, basis, weight):
    if j1 < 1 or j2 < 1:
        raise DomainError("pair coefficients use j1, j2 >= 1")
    if max(j1, j2) > basis.max_degree:
        raise DomainError(f"degree {max(j1, j2)} exceeds basis degree {basis.max_degree}")
    X = _checked(p)
    F1 = _fj(basis, X, j1)
    F2 = F1 if j1 == j2 else _fj(basis, X, j2)
    if weight is not None:
        F1 = F1 * weight[:, None]
    C = F1.T @ F2 / X.shape[0]
    if j1 == j2:
        C = 0.5 * (C + C.T)
    np.fill_diagonal(C, DIAGONAL_FILL)
    return C


def pair_coeff_matrix(p: PanelFrame, j1: int, j2: int, basis: OrthoBasis) -> PairCoeffMatrix:
    """Entry ``(a, b)`` is ``mean_t f_j1(x_a^t) f_j2(x_b^t)``; the diagonal is filled with 0."""
    C = _pair_matrix(p, j1, j2, basis, None)
    return PairCoeffMatrix(list(p.names), C, j1, j2)


def pair_trend_matrix(p: PanelFrame, j1: int, j2: int, basis: OrthoBasis) -> PairCoeffMatrix:
    """
    Linear-in-time coefficient of each pair:
    ``mean_t f_j1(x_a^t) f_j2(x_b^t) f_1((t - 1/2) / n)``.
    """
    tau = time_grid(p.n)
    C = _pair_matrix(p, j1, j2, basis, _fj(basis, tau, 1))
    return PairCoeffMatrix(list(p.names), C, j1, j2, trend=True)


def eigendecompose(m, tol: float = 1e-12):
    """
    Eigenvalues (descending) and orthonormal eigenvectors (columns) of a
    symmetric matrix.

    Raises
    ------
    ContractError
        If the matrix is not symmetric.
    """
    A = np.asarray(m.matrix if isinstance(m, PairCoeffMatrix) else m, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError("eigendecomposition needs a square matrix")
    scale = max(float(np.max(np.abs(A))), 1.0)
    if np.max(np.abs(A - A.T)) > tol * scale:
        raise ContractError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (A + A.T))
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def eigen_to_json(values, vectors) -> str:
    return json.dumps({"values": [float(v) for v in values],
                       "vectors": [[float(v) for v in col] for col in np.asarray(vectors).T]})


def covariance_pca(p, q: int = 5):
    """
    Covariance (population normalization), correlation and the ``q`` leading
    covariance eigenvectors of a panel of raw returns.

    Returns
    -------
    cov, corr : ndarray
    values : ndarray
        ``q`` largest eigenvalues, descending.
    vectors : ndarray, shape (k, q)
    """
    Y = np.asarray(p.values if isinstance(p, PanelFrame) else p, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise InsufficientDataError("covariance needs at least two aligned observations")
    if np.any(~np.isfinite(Y)):
        raise AlignmentError("panel contains missing or non-finite entries")
    Yc = Y - Y.mean(axis=0)
    cov = Yc.T @ Yc / Y.shape[0]
    sd = np.sqrt(np.diag(cov))
    if np.any(sd <= 0):
        bad = int(np.flatnonzero(sd <= 0)[0])
        raise DegenerateScaleError(f"series {bad} has zero variance")
    corr = cov / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    vals, vecs = eigendecompose(cov, tol=1e-10)
    q = min(q, len(vals))
    return cov, corr, vals[:q], vecs[:, :q]
