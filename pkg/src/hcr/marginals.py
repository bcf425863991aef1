"""
Marginal distributions and normalization to near-uniform [0, 1] variables.

Three families are supported, all symmetric around a location ``mu``:

* ``gaussian``  -- scale is the standard deviation
* ``laplace``   -- density ``exp(-|y - mu| / b) / 2b``, scale is ``b``
* ``epd``       -- exponential power distribution
  ``rho(y) ~ exp(-|y - mu|^kappa / (kappa sigma^kappa))``; ``kappa = 2`` is the
  Gaussian and ``kappa = 1`` the Laplace distribution.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize, special

from ._numerics import P_HI, P_LO, golden_section
from .errors import (
    DegenerateScaleError,
    DomainError,
    FitFailureError,
    InsufficientDataError,
)

logger = logging.getLogger(__name__)

FAMILIES = ("gaussian", "laplace", "epd")

# Search range for the EPD shape exponent; configurable per call.
EPD_KAPPA_BOUNDS = (0.3, 4.0)

__all__ = [
    "FAMILIES",
    "MarginalModel",
    "NormalizedSeries",
    "SeriesFrame",
    "cdf",
    "density_pullback",
    "fit",
    "fit_epd",
    "fit_gaussian",
    "fit_laplace",
    "log_returns",
    "normalize",
    "pdf",
    "quantile",
]


@dataclass
class SeriesFrame:
    """Named real-valued series with optional timestamps."""

    name: str
    values: np.ndarray
    timestamps: Optional[Sequence] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise DomainError(f"series {self.name!r} must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise DomainError(f"series {self.name!r} contains non-finite values")
        if self.timestamps is not None and len(self.timestamps) != len(self.values):
            raise DomainError(f"series {self.name!r}: timestamps/values length mismatch")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class MarginalModel:
    """
    A fitted symmetric one-dimensional distribution.

    ``scale`` is sigma for the Gaussian and EPD families and b for Laplace.
    ``kappa`` is only meaningful for the EPD family.
    """

    family: str
    mu: float
    scale: float
    kappa: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown family {self.family!r}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise DegenerateScaleError(f"scale must be positive, got {self.scale}")
        if self.family == "epd":
            if self.kappa is None or not self.kappa > 0:
                raise DomainError("EPD requires kappa > 0")

    def cdf(self, y):
        return cdf(self, y)

    def pdf(self, y):
        return pdf(self, y)

    def logpdf(self, y):
        return logpdf(self, y)

    def quantile(self, p):
        return quantile(self, p)

    def sample(self, size, rng=None):
        """Draw ``size`` independent values."""
        rng = np.random.default_rng(rng)
        if self.family == "gaussian":
            return rng.normal(self.mu, self.scale, size)
        if self.family == "laplace":
            return rng.laplace(self.mu, self.scale, size)
        k = self.kappa
        g = rng.gamma(1.0 / k, 1.0, size)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return self.mu + self.scale * sign * (k * g) ** (1.0 / k)

    def to_dict(self) -> dict:
        out = {"family": self.family, "mu": self.mu, "scale": self.scale}
        if self.family == "epd":
            out["kappa"] = self.kappa
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MarginalModel":
        return cls(d["family"], float(d["mu"]), float(d["scale"]),
                   None if d.get("kappa") is None else float(d["kappa"]))


@dataclass
class NormalizedSeries:
    """Values ``x^t = CDF(y^t)`` in (0, 1) and the model that produced them."""

    x: np.ndarray
    model: Optional[MarginalModel] = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.x)


def _as_1d(y, min_len=1) -> np.ndarray:
    arr = np.asarray(y.values if isinstance(y, SeriesFrame) else y, dtype=float).ravel()
    if arr.size < min_len:
        raise InsufficientDataError(f"need at least {min_len} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("sample contains non-finite values")
    return arr


def log_returns(s) -> np.ndarray:
    """``y^t = ln v^{t+1} - ln v^t``; the result is one shorter than the input."""
    v = _as_1d(s)
    if v.size < 2:
        raise InsufficientDataError("log returns need at least two values")
    if np.any(v <= 0):
        bad = int(np.flatnonzero(v <= 0)[0])
        raise DomainError(f"nonpositive value {v[bad]} at position {bad}")
    return np.diff(np.log(v))


# --- fitting ---------------------------------------------------------------

def fit_gaussian(y) -> MarginalModel:
    """Sample mean and population standard deviation."""
    arr = _as_1d(y, 2)
    sd = float(np.std(arr))
    if sd <= 0:
        raise DegenerateScaleError("all values identical; Gaussian scale is zero")
    return MarginalModel("gaussian", float(np.mean(arr)), sd)


def fit_laplace(y) -> MarginalModel:
    """Maximum likelihood Laplace fit: median and mean absolute deviation."""
    arr = _as_1d(y, 2)
    mu = float(np.median(arr))
    b = float(np.mean(np.abs(arr - mu)))
    if b <= 0:
        raise DegenerateScaleError("all values identical; Laplace scale is zero")
    return MarginalModel("laplace", mu, b)


def _epd_log_norm(kappa, sigma):
    # log of 2 sigma kappa^(1/kappa - 1) Gamma(1/kappa)
    return (math.log(2.0 * sigma) + (1.0 / kappa - 1.0) * math.log(kappa)
            + special.gammaln(1.0 / kappa))


def _epd_profile(srt, kappa, lo, hi, spread):
    """Best (mu, sigma, mean loglik) for a fixed kappa; ``srt`` is the sorted sample."""

    def s(mu):
        return float(np.mean(np.abs(srt - mu) ** kappa))

    res = optimize.minimize_scalar(s, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-9 * spread})
    mu, smin = float(res.x), float(res.fun)
    if kappa < 1.0:
        # concave between sample points, so the minimizer is a sample point
        pos = int(np.searchsorted(srt, mu))
        for c in srt[max(pos - 16, 0): pos + 16]:
            sc = s(c)
            if sc < smin:
                mu, smin = float(c), sc
    if smin <= 0:
        raise DegenerateScaleError("EPD scale is zero")
    sigma = smin ** (1.0 / kappa)
    ll = -_epd_log_norm(kappa, sigma) - 1.0 / kappa
    return mu, sigma, ll


def fit_epd(y, kappa_bounds=EPD_KAPPA_BOUNDS, tol=1e-4) -> MarginalModel:
    """
    Maximum likelihood fit of the exponential power distribution.

    The likelihood is profiled: for fixed ``kappa`` the optimal sigma has the
    closed form ``sigma^kappa = mean |y - mu|^kappa`` and ``mu`` minimizes
    ``sum |y - mu|^kappa``.  ``kappa`` is then found by golden-section search
    on ``kappa_bounds``.

    Raises
    ------
    FitFailureError
        If the search does not converge; ``best`` carries the best model seen.
    """
    arr = _as_1d(y, 8)
    if np.ptp(arr) == 0:
        raise DegenerateScaleError("all values identical; EPD scale is zero")
    q25, q50, q75 = np.percentile(arr, [25, 50, 75])
    spread = max(q75 - q25, np.ptp(arr) * 1e-6)
    lo, hi = q50 - spread, q50 + spread
    srt = np.sort(arr)
    best = {}

    def neg_ll(kappa):
        mu, sigma, ll = _epd_profile(srt, kappa, lo, hi, spread)
        if not best or ll > best["ll"]:
            best.update(ll=ll, model=MarginalModel("epd", mu, sigma, kappa))
        return -ll

    _, _, converged = golden_section(neg_ll, *kappa_bounds, tol=tol)
    if not converged or "model" not in best:
        raise FitFailureError("EPD shape search did not converge", best=best.get("model"))
    model = best["model"]
    if min(abs(model.kappa - kappa_bounds[0]), abs(model.kappa - kappa_bounds[1])) < 10 * tol:
        logger.warning("EPD kappa=%.4f at search boundary %s", model.kappa, kappa_bounds)
    return model


def fit(y, family: str = "laplace", **kwargs) -> MarginalModel:
    """Dispatch to the fitting routine of ``family``."""
    if family == "gaussian":
        return fit_gaussian(y)
    if family == "laplace":
        return fit_laplace(y)
    if family == "epd":
        return fit_epd(y, **kwargs)
    raise DomainError(f"unknown family {family!r}")


# --- distribution functions -----------------------------------------------

def _scalar_or_array(out, y):
    return float(out) if np.ndim(y) == 0 else out


def cdf(model: MarginalModel, y):
    """Cumulative distribution function."""
    y = np.asarray(y, dtype=float)
    z = (y - model.mu) / model.scale
    if model.family == "gaussian":
        out = special.ndtr(z)
    elif model.family == "laplace":
        e = 0.5 * np.exp(-np.abs(z))
        out = np.where(z < 0, e, 1.0 - e)
    else:
        k = model.kappa
        tail = 0.5 * special.gammaincc(1.0 / k, np.abs(z) ** k / k)
        out = np.where(z < 0, tail, 1.0 - tail)
    return _scalar_or_array(out, y)


def logpdf(model: MarginalModel, y):
    y = np.asarray(y, dtype=float)
    z = (y - model.mu) / model.scale
    if model.family == "gaussian":
        out = -0.5 * z * z - math.log(model.scale * math.sqrt(2.0 * math.pi))
    elif model.family == "laplace":
        out = -np.abs(z) - math.log(2.0 * model.scale)
    else:
        k = model.kappa
        out = -np.abs(z) ** k / k - _epd_log_norm(k, model.scale)
    return _scalar_or_array(out, y)


def pdf(model: MarginalModel, y):
    """Probability density; the derivative of :func:`cdf`."""
    out = np.exp(logpdf(model, y))
    return _scalar_or_array(out, y)


def quantile(model: MarginalModel, p):
    """Inverse of :func:`cdf` for ``p`` in (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0)) or np.any(~(p < 1)):
        raise DomainError("quantile requires p strictly inside (0, 1)")
    lower = p < 0.5
    tail = np.where(lower, p, 1.0 - p)  # probability beyond the quantile
    if model.family == "gaussian":
        z = -special.ndtri(tail)
    elif model.family == "laplace":
        z = -np.log(2.0 * tail)
    else:
        k = model.kappa
        u = special.gammainccinv(1.0 / k, 2.0 * tail)
        z = (k * u) ** (1.0 / k)
    out = model.mu + model.scale * np.where(lower, -z, z)
    return _scalar_or_array(out, p)


def normalize(y, model: MarginalModel, name: str = "") -> NormalizedSeries:
    """Apply the model CDF elementwise; results are kept strictly inside (0, 1)."""
    arr = _as_1d(y)
    x = np.clip(np.asarray(cdf(model, arr), dtype=float), P_LO, P_HI)
    return NormalizedSeries(x, model, name=name)


def density_pullback(rho_x: Optional[Callable], model: MarginalModel, y):
    """
    Density on the original scale, ``rho_Y(y) = rho_X(G(y)) g(y)``.

    ``rho_x`` is any callable density on [0, 1] (e.g. a predicted density);
    ``None`` means the uniform density.
    """
    g = pdf(model, y)
    if rho_x is None:
        return g
    x = np.clip(np.asarray(cdf(model, y), dtype=float), P_LO, P_HI)
    out = np.asarray(rho_x(x), dtype=float) * g
    return _scalar_or_array(out, y)
