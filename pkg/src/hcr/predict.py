"""
Conditional densities of the current value given its context.

Substituting a context into the joint polynomial leaves a one-dimensional
polynomial ``sum_j b_j f_j(x)``.  Dividing by ``b_0`` makes it integrate to 1
because every ``f_j`` with ``j >= 1`` integrates to zero.  Such polynomials can
dip below zero; a monotone calibration ``phi`` maps raw values to positive
densities, followed by renormalization over [0, 1].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from ._numerics import gauss_legendre_unit, golden_section
from .errors import (
    ContractError,
    DegenerateContextError,
    DomainError,
    FitFailureError,
    InsufficientDataError,
    ShapeError,
)
from .estimate import CLAMP_EPS, CoefficientTensor, WindowSet
from .polybasis import OrthoBasis, eval_basis

logger = logging.getLogger(__name__)

CALIBRATION_KINDS = ("none", "clamp", "piecewise", "empirical")

# phi(z) = max(floor, min(z, slope * z + intercept)); used when nothing is fitted.
DEFAULT_PIECEWISE = {"floor": 0.15, "slope": 0.15, "intercept": 1.7}
QUAD_POINTS = 256
# nodes per polynomial piece; exact for degree <= 2 * SEGMENT_POINTS - 1
SEGMENT_POINTS = 8

__all__ = [
    "Calibration",
    "PredictedDensity1D",
    "PredictionBatch",
    "calibrate_empirical",
    "condition",
    "condition_batch",
    "condition_numerator",
    "fit_calibration_mle",
    "phi_integrals",
    "predict_windows",
    "predicted_density_at",
]


@dataclass(frozen=True)
class Calibration:
    """
    Monotone map ``phi`` from raw polynomial values to densities.

    kind
        ``none``: ``phi(z) = z`` (raw values, possibly negative);
        ``clamp``: ``max(z, floor)``;
        ``piecewise``: ``max(floor, min(z, slope * z + intercept))``;
        ``empirical``: monotone interpolation of ``(grid_z, grid_phi)``,
        constant beyond the ends.
    """

    kind: str = "piecewise"
    floor: float = DEFAULT_PIECEWISE["floor"]
    slope: float = DEFAULT_PIECEWISE["slope"]
    intercept: float = DEFAULT_PIECEWISE["intercept"]
    grid_z: Optional[tuple] = None
    grid_phi: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in CALIBRATION_KINDS:
            raise DomainError(f"unknown calibration kind {self.kind!r}")
        if self.kind == "empirical":
            if self.grid_z is None or self.grid_phi is None or len(self.grid_z) != len(self.grid_phi):
                raise DomainError("empirical calibration needs matching grid_z/grid_phi")
            object.__setattr__(self, "grid_z", tuple(float(v) for v in self.grid_z))
            object.__setattr__(self, "grid_phi", tuple(float(v) for v in self.grid_phi))

    @classmethod
    def none(cls) -> "Calibration":
        return cls("none")

    @classmethod
    def clamp(cls, floor: float) -> "Calibration":
        return cls("clamp", floor=floor)

    def phi(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "none":
            return z
        if self.kind == "clamp":
            return np.maximum(z, self.floor)
        if self.kind == "piecewise":
            return np.maximum(self.floor, np.minimum(z, self.slope * z + self.intercept))
        return np.interp(z, self.grid_z, self.grid_phi)

    __call__ = phi

    def kinks(self) -> np.ndarray:
        """Input values where ``phi`` may change slope; ``phi`` is affine between them."""
        if self.kind == "clamp":
            return np.array([self.floor])
        if self.kind == "piecewise":
            out = [self.floor]
            if self.slope < 1:
                out.append(self.intercept / (1.0 - self.slope))
            if self.slope > 0:
                out.append((self.floor - self.intercept) / self.slope)
            return np.array(out)
        if self.kind == "empirical":
            return np.asarray(self.grid_z)
        return np.empty(0)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("clamp", "piecewise"):
            out["floor"] = self.floor
        if self.kind == "piecewise":
            out.update(slope=self.slope, intercept=self.intercept)
        if self.kind == "empirical":
            out.update(grid_z=list(self.grid_z), grid_phi=list(self.grid_phi))
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Calibration":
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, **d)


def _rowpoly(M, X):
    """Horner evaluation of row ``n``'s ascending monomial coefficients at ``X[n, ...]``."""
    shape = (M.shape[0],) + (1,) * (X.ndim - 1)
    out = np.broadcast_to(M[:, -1].reshape(shape), X.shape).copy()
    for c in range(M.shape[1] - 2, -1, -1):
        out = out * X + M[:, c].reshape(shape)
    return out


def _critical_points(M):
    """Real roots of each row's derivative, NaN padded, shape (N, degree - 1)."""
    N, k = M.shape
    out = np.full((N, max(k - 2, 0)), np.nan)
    if k < 3:
        return out
    D = M[:, 1:] * np.arange(1, k)
    scale = np.max(np.abs(D), axis=1, keepdims=True)
    big = np.abs(D) > 1e-12 * scale
    eff = np.where(big.any(axis=1), D.shape[1] - 1 - np.argmax(big[:, ::-1], axis=1), 0)
    # companion matrices of the monic derivatives, one batch per effective degree
    for g in range(1, k - 1):
        rows = np.flatnonzero(eff == g)
        if rows.size == 0:
            continue
        Dn = D[rows, : g + 1] / D[rows, g, None]
        comp = np.zeros((rows.size, g, g))
        comp[:, np.arange(1, g), np.arange(g - 1)] = 1.0
        comp[:, :, -1] = -Dn[:, :-1]
        r = np.linalg.eigvals(comp)
        out[rows, :g] = np.where(np.abs(r.imag) < 1e-9, r.real, np.nan)
    return out


def _phi_block(C, M, basis, cal, upper, levels):
    N, k = C.shape
    U = upper[:, None]
    crit = _critical_points(M)
    crit = np.where(np.isnan(crit), U, np.clip(crit, 0.0, U))
    E = np.sort(np.concatenate([np.zeros((N, 1)), crit, U], axis=1), axis=1)

    # points where a monotone piece crosses a kink level of phi
    cuts = np.empty((N, 0))
    if levels.size:
        V = _rowpoly(M, E)
        vlo, vhi = np.minimum(V[:, :-1], V[:, 1:]), np.maximum(V[:, :-1], V[:, 1:])
        hit = (levels > vlo[..., None]) & (levels < vhi[..., None])
        rows, piece, lev = np.nonzero(hit)
        if rows.size:
            lo, hi = E[rows, piece], E[rows, piece + 1]
            target = levels[lev]
            Mr = M[rows]
            f_lo = _rowpoly(Mr, lo) - target
            for _ in range(30):
                mid = 0.5 * (lo + hi)
                f_mid = _rowpoly(Mr, mid) - target
                same = np.sign(f_mid) == np.sign(f_lo)
                lo = np.where(same, mid, lo)
                f_lo = np.where(same, f_mid, f_lo)
                hi = np.where(same, hi, mid)
            count = np.bincount(rows, minlength=N)
            pos = np.arange(rows.size) - np.repeat(np.cumsum(count) - count, count)
            cuts = np.broadcast_to(U, (N, count.max())).copy()
            cuts[rows, pos] = 0.5 * (lo + hi)
    P = np.sort(np.concatenate([E, cuts], axis=1), axis=1)
    a, width = P[:, :-1], np.diff(P, axis=1)

    nodes, weights = gauss_legendre_unit(SEGMENT_POINTS)
    X = a[..., None] + width[..., None] * nodes
    raw = np.einsum("nsqj,nj->nsq", eval_basis(basis, np.clip(X, 0.0, 1.0))[..., :k], C)
    return np.einsum("nsq,q,ns->n", cal.phi(raw), weights, width)


def phi_integrals(coeffs, basis: OrthoBasis, cal: Calibration, upper=None) -> np.ndarray:
    """
    ``int_0^{upper_i} phi(rho_i(u)) du`` for the polynomials in the rows of ``coeffs``.

    ``phi`` is affine between its kinks, so the integrand is a polynomial
    between the points where ``rho_i`` crosses a kink.  Those points are
    located by bisection on the monotone pieces of ``rho_i``, and each piece
    is integrated by Gauss-Legendre quadrature, which is exact up to rounding
    (a kink misplaced by ``h`` costs ``O(h^2)`` because ``phi`` is continuous).
    """
    C = np.atleast_2d(np.asarray(coeffs, dtype=float))
    N, k = C.shape
    upper = np.ones(N) if upper is None else np.clip(np.asarray(upper, dtype=float).reshape(N), 0.0, 1.0)
    M = C @ basis.coeffs[:k, :k]
    levels = np.unique(cal.kinks())
    out = np.empty(N)
    step = max(1, 2 ** 14 // max(k, 1))
    for s in range(0, N, step):
        out[s:s + step] = _phi_block(C[s:s + step], M[s:s + step], basis, cal, upper[s:s + step], levels)
    return out


@dataclass
class PredictedDensity1D:
    """
    Conditional density ``sum_j coeffs[j] f_j(x)`` on [0, 1].

    ``coeffs[0] == 1`` after normalization; ``b0`` is the divisor that was
    applied (the modelled mass of the context).  ``degenerate`` marks a
    uniform fallback used because ``b0 <= 0``.
    """

    coeffs: np.ndarray
    b0: float = 1.0
    degenerate: bool = False

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def raw(self, basis: OrthoBasis, x):
        F = eval_basis(basis, x)[..., : self.degree + 1]
        return F @ self.coeffs

    def density(self, basis: OrthoBasis, calibration: Optional[Calibration] = None):
        """Callable ``x -> density``, suitable for ``density_pullback``."""
        if calibration is None or calibration.kind == "none":
            return lambda x: self.raw(basis, x)
        norm = float(phi_integrals(self.coeffs, basis, calibration)[0])
        return lambda x: calibration.phi(self.raw(basis, x)) / norm


@dataclass
class PredictionBatch:
    """
    Many conditional densities at once.

    ``coeffs`` has shape (N, m + 1) with ``coeffs[:, 0] == 1``.
    """

    coeffs: np.ndarray
    b0: np.ndarray
    degenerate: np.ndarray
    actual: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.coeffs.shape[0]

    def __getitem__(self, i) -> PredictedDensity1D:
        return PredictedDensity1D(self.coeffs[i].copy(), float(self.b0[i]), bool(self.degenerate[i]))

    @property
    def n_degenerate(self) -> int:
        return int(np.count_nonzero(self.degenerate))

    @classmethod
    def from_list(cls, preds: Sequence[PredictedDensity1D], actual=None) -> "PredictionBatch":
        m = max(p.degree for p in preds)
        B = np.zeros((len(preds), m + 1))
        for i, p in enumerate(preds):
            B[i, : p.degree + 1] = p.coeffs
        return cls(B, np.array([p.b0 for p in preds]),
                   np.array([p.degenerate for p in preds]),
                   None if actual is None else np.asarray(actual, dtype=float))

    def raw(self, basis: OrthoBasis, x) -> np.ndarray:
        """Raw value of polynomial ``i`` at ``x[i]``."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        F = eval_basis(basis, x)[:, : self.coeffs.shape[1]]
        return np.einsum("ij,ij->i", F, self.coeffs)

    def raw_grid(self, basis: OrthoBasis, grid) -> np.ndarray:
        """Raw values of every polynomial on a shared grid, shape (N, len(grid))."""
        F = eval_basis(basis, np.asarray(grid, dtype=float))[:, : self.coeffs.shape[1]]
        return self.coeffs @ F.T

    def normalizers(self, basis: OrthoBasis, cal: Calibration) -> np.ndarray:
        """``int_0^1 phi(rho_i(u)) du`` for every row."""
        return phi_integrals(self.coeffs, basis, cal)

    def density(self, basis: OrthoBasis, x=None, cal: Optional[Calibration] = None) -> np.ndarray:
        """
        Density of row ``i`` at ``x[i]`` (defaults to the stored actual values).

        Without calibration (or ``kind == "none"``) the raw value is returned.
        """
        x = self.actual if x is None else x
        if x is None:
            raise ContractError("no evaluation points given and no actual values stored")
        raw = self.raw(basis, x)
        if cal is None or cal.kind == "none":
            return raw
        return cal.phi(raw) / self.normalizers(basis, cal)

    def cdf(self, basis: OrthoBasis, x=None, cal: Optional[Calibration] = None) -> np.ndarray:
        """Predictive CDF of row ``i`` at ``x[i]``."""
        x = self.actual if x is None else x
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        cal = Calibration.none() if cal is None else cal
        out = phi_integrals(self.coeffs, basis, cal, upper=x)
        if cal.kind != "none":
            out = out / self.normalizers(basis, cal)
        return np.clip(out, 0.0, 1.0)


def _check_context(t: CoefficientTensor, C: np.ndarray):
    if C.shape[1] != t.d - 1:
        raise ShapeError(f"context of length {C.shape[1]} for tensor of dimension {t.d}")
    if np.any(~np.isfinite(C)) or np.any(C < 0) or np.any(C > 1):
        raise DomainError("context coordinates must lie in [0, 1]")


def condition_numerator(t: CoefficientTensor, basis: OrthoBasis, contexts) -> np.ndarray:
    """
    Unnormalized conditional coefficients.

    ``out[n, j1] = sum over entries with first index j1 of
    a_j * prod_{i>=2} f_{j_i}(context[n, i-2])``.  Linear in the tensor.
    """
    C = np.asarray(contexts, dtype=float)
    single = C.ndim == 1
    C = C.reshape(1, -1) if single else C
    _check_context(t, C)
    C = np.clip(C, CLAMP_EPS, 1.0 - CLAMP_EPS)
    m1 = t.degrees[0]
    k = len(t)
    S = np.zeros((k, m1 + 1))
    S[np.arange(k), t.indices[:, 0]] = 1.0
    V = [eval_basis(basis, C[:, i])[:, : t.degrees[i + 1] + 1] for i in range(t.d - 1)]
    out = np.empty((C.shape[0], m1 + 1))
    step = max(1, 2 ** 21 // max(k, 1))
    for s in range(0, C.shape[0], step):
        W = np.broadcast_to(t.values, (min(step, C.shape[0] - s), k)).copy()
        for i in range(1, t.d):
            W *= V[i - 1][s:s + step][:, t.indices[:, i]]
        out[s:s + step] = W @ S
    return out[0] if single else out


def condition(t: CoefficientTensor, basis: OrthoBasis, context) -> PredictedDensity1D:
    """
    Conditional density of coordinate 1 given ``context`` (length ``d - 1``).

    Raises
    ------
    DegenerateContextError
        If the modelled mass of the context, ``b_0``, is not positive.
    """
    b = condition_numerator(t, basis, np.asarray(context, dtype=float).reshape(-1))
    if not b[0] > 0:
        raise DegenerateContextError(f"context has nonpositive mass b0={b[0]:.3g}", b0=float(b[0]))
    return PredictedDensity1D(b / b[0], float(b[0]))


def condition_batch(t: CoefficientTensor, basis: OrthoBasis, contexts) -> PredictionBatch:
    """
    Vectorized :func:`condition`.

    Contexts with ``b_0 <= 0`` fall back to the uniform density and are
    flagged in ``degenerate``.
    """
    C = np.asarray(contexts, dtype=float)
    if C.ndim == 1:
        C = C.reshape(1, -1)
    B = condition_numerator(t, basis, C)
    b0 = B[:, 0].copy()
    bad = ~(b0 > 0)
    B[~bad] /= b0[~bad, None]
    B[bad] = 0.0
    B[bad, 0] = 1.0
    if bad.any():
        logger.info("%d of %d contexts degenerate; using uniform density", bad.sum(), len(b0))
    return PredictionBatch(B, b0, bad)


def predict_windows(t: CoefficientTensor, basis: OrthoBasis, w: WindowSet) -> PredictionBatch:
    """Condition on each window's context and keep its current value as ``actual``."""
    batch = condition_batch(t, basis, w.context)
    batch.actual = np.clip(w.current.copy(), 0.0, 1.0)
    return batch


def predicted_density_at(p: PredictedDensity1D, basis: OrthoBasis, x,
                         cal: Optional[Calibration] = None):
    """
    ``phi(rho(x)) / int_0^1 phi(rho(u)) du``; the raw ``rho(x)`` if ``cal`` is None.
    """
    raw = p.raw(basis, x)
    if cal is None or cal.kind == "none":
        return float(raw) if np.ndim(raw) == 0 else raw
    norm = float(phi_integrals(p.coeffs, basis, cal)[0])
    out = cal.phi(raw) / norm
    return float(out) if np.ndim(out) == 0 else out


def _as_batch(preds, actual_values) -> PredictionBatch:
    if isinstance(preds, PredictionBatch):
        batch = preds
    else:
        batch = PredictionBatch.from_list(list(preds))
    actual = batch.actual if actual_values is None else np.asarray(actual_values, dtype=float)
    if actual is None or len(actual) != len(batch):
        raise ShapeError("need one actual value per prediction")
    if len(batch) < 100:
        raise InsufficientDataError(f"calibration needs at least 100 predictions, got {len(batch)}")
    return batch, np.clip(actual, 0.0, 1.0)


def calibrate_empirical(preds, actual_values, basis: OrthoBasis, grid: int = 1000,
                        bins: Optional[int] = None, floor: float = 1e-3) -> Calibration:
    """
    Nonparametric calibration ``phi = p_actual / p_all``.

    ``p_actual`` is the density of raw predicted values at the observed
    outcomes; ``p_all`` is the density of raw values over a regular lattice of
    ``grid`` points per polynomial.  Both are finite differences of empirical
    distribution functions over shared bins that hold equal numbers of the
    observed-outcome values.  The ratio is made nondecreasing by weighted
    isotonic regression and floored at ``floor``.
    """
    if grid < 100:
        raise DomainError("grid must have at least 100 points")
    batch, actual = _as_batch(preds, actual_values)
    r1 = batch.raw(basis, actual)
    n = r1.size
    if np.ptp(r1) < 1e-9:
        z0 = float(np.mean(r1))
        return Calibration("empirical", grid_z=(z0,), grid_phi=(1.0,))

    nb = bins or int(np.clip(n // 50, 10, 200))
    edges = np.unique(np.quantile(r1, np.linspace(0.0, 1.0, nb + 1)))
    widths = np.diff(edges)
    c1 = np.histogram(r1, edges)[0].astype(float)

    lattice = (np.arange(grid) + 0.5) / grid
    F = eval_basis(basis, lattice)[:, : batch.coeffs.shape[1]]
    c2 = np.zeros(len(edges) - 1)
    step = max(1, 2 ** 22 // grid)
    for s in range(0, n, step):
        c2 += np.histogram(batch.coeffs[s:s + step] @ F.T, edges)[0]
    p1 = c1 / (n * widths)
    p2 = c2 / (n * grid * widths)

    ok = (c1 > 0) & (c2 > 0)
    if not ok.any():
        raise FitFailureError("predicted-at-actual and lattice densities share no support")
    centers = np.array([r1[(r1 >= a) & (r1 <= b)].mean() if c else 0.5 * (a + b)
                        for a, b, c in zip(edges[:-1], edges[1:], c1)])
    ratio = p1[ok] / p2[ok]
    mono = optimize.isotonic_regression(ratio, weights=c1[ok], increasing=True).x
    mono = np.maximum(mono, floor)
    return Calibration("empirical", grid_z=tuple(centers[ok]), grid_phi=tuple(mono))


def _mean_log_likelihood(cal, r1, R, weights):
    num = cal.phi(r1)
    if np.any(num <= 0):
        return -np.inf
    norm = cal.phi(R) @ weights
    return float(np.mean(np.log(num) - np.log(norm)))


def fit_calibration_mle(preds, actual_values, basis: OrthoBasis, family: str = "clamp",
                        a_grid=None, tol: float = 1e-5) -> Calibration:
    """
    Calibration parameters maximizing the mean log-likelihood of the
    renormalized calibrated densities at the observed outcomes.

    family
        ``"clamp"``: ``phi = max(z, a)``.  ``a`` is chosen on ``a_grid``
        (default 0, 0.01, ..., 1); among tied values the smallest wins, and an
        interior maximum is refined by golden-section search.
        ``"piecewise"``: ``(floor, slope, intercept)`` by bounded Nelder-Mead
        started from the defaults.
    """
    batch, actual = _as_batch(preds, actual_values)
    r1 = batch.raw(basis, actual)
    nodes, weights = gauss_legendre_unit(QUAD_POINTS)
    R = batch.raw_grid(basis, nodes)

    if family == "clamp":
        a_grid = np.round(np.linspace(0.0, 1.0, 101), 10) if a_grid is None else np.asarray(a_grid, float)
        ll = np.array([_mean_log_likelihood(Calibration.clamp(a), r1, R, weights) for a in a_grid])
        if not np.isfinite(ll).any():
            raise FitFailureError("log-likelihood is -inf on the whole grid", best=Calibration.clamp(a_grid[-1]))
        best = float(np.max(ll))
        k = int(np.flatnonzero(ll >= best - 1e-12)[0])
        a = float(a_grid[k])
        if 0 < k < len(a_grid) - 1 and ll[k - 1] < best and ll[k + 1] < best:
            x, f, converged = golden_section(
                lambda v: -_mean_log_likelihood(Calibration.clamp(v), r1, R, weights),
                a_grid[k - 1], a_grid[k + 1], tol=tol)
            if -f > best:
                a = float(x)
        return Calibration.clamp(a)

    if family == "piecewise":
        def neg(p):
            cal = Calibration("piecewise", floor=p[0], slope=p[1], intercept=p[2])
            return -_mean_log_likelihood(cal, r1, R, weights)

        x0 = [DEFAULT_PIECEWISE[k] for k in ("floor", "slope", "intercept")]
        res = optimize.minimize(neg, x0, method="Nelder-Mead",
                                bounds=[(1e-4, 2.0), (0.0, 1.0), (0.0, 10.0)],
                                options={"xatol": tol, "fatol": 1e-10, "maxiter": 2000})
        cal = Calibration("piecewise", floor=res.x[0], slope=res.x[1], intercept=res.x[2])
        if not res.success or not np.isfinite(res.fun):
            raise FitFailureError(f"piecewise calibration did not converge: {res.message}", best=cal)
        return cal

    raise DomainError(f"unknown calibration family {family!r}")
