"""
Scoring and baseline models.

Predictions are scored by the mean base-2 log of the predicted density at
the realized value.  Baselines: static Gaussian, Laplace and EPD marginals,
a Gaussian ARCH(0,1) whose variance depends on the previous squared return,
and least-squares linear predictors.  The HCR chain normalizes with a
fitted marginal, models ``(x^t, x^{t-1})`` with a polynomial and pulls the
conditional density back to the original scale.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, optimize, special

from . import marginals
from ._numerics import P_HI, P_LO
from .errors import (
    ContractError,
    DomainError,
    FitFailureError,
    InsufficientDataError,
    RankError,
)
from .estimate import build_windows, estimate_coefficients, prune
from .marginals import MarginalModel, NormalizedSeries
from .polybasis import build_basis
from .predict import (
    Calibration,
    calibrate_empirical,
    fit_calibration_mle,
    predict_windows,
)

logger = logging.getLogger(__name__)

ARCH_FORMS = ("variance", "std")

__all__ = [
    "ArchModel",
    "CoverageCurve",
    "EvalReport",
    "LinearPredictor",
    "arch_normalize",
    "coverage_curve",
    "evaluate_models",
    "fit_arch01",
    "fit_linear_predictor",
    "hcr_chain",
    "log_likelihood_bits",
    "make_calibration",
    "sorted_prediction_curve",
]


def log_likelihood_bits(densities) -> float:
    """Mean of ``log2(density)``; every density must be positive."""
    d = np.asarray(densities, dtype=float).ravel()
    if d.size == 0:
        raise InsufficientDataError("no densities to score")
    if np.any(~(d > 0)) or np.any(~np.isfinite(d)):
        raise ContractError("densities must be finite and positive; calibrate predictions first")
    return float(np.mean(np.log2(d)))


@dataclass
class CoverageCurve:
    """
    Sorted CDF values of the realized outcomes.

    ``max_deviation`` is ``max_i |sorted_i - (i - 1/2)/n|``; ``ks_statistic``
    is the Kolmogorov-Smirnov distance to the uniform distribution, which
    exceeds it by exactly ``1/(2n)``.
    """

    sorted_values: np.ndarray
    max_deviation: float
    ks_statistic: float

    @property
    def n(self) -> int:
        return self.sorted_values.size


def coverage_curve(x) -> CoverageCurve:
    arr = np.sort(np.asarray(x.x if isinstance(x, NormalizedSeries) else x, dtype=float).ravel())
    n = arr.size
    if n == 0:
        raise InsufficientDataError("coverage curve of an empty sample")
    i = np.arange(1, n + 1)
    dev = float(np.max(np.abs(arr - (i - 0.5) / n)))
    ks = float(max(np.max(i / n - arr), np.max(arr - (i - 1) / n)))
    return CoverageCurve(arr, dev, ks)


def sorted_prediction_curve(preds):
    """Ascending predicted densities at the actual values and the fraction below 1."""
    arr = np.sort(np.asarray(preds, dtype=float).ravel())
    if arr.size == 0:
        raise InsufficientDataError("no predictions")
    return arr, float(np.mean(arr < 1.0))


@dataclass
class EvalReport:
    model: str
    mean_log2_density: float
    n: int
    coverage_curve: np.ndarray = field(repr=False)
    sorted_density_curve: np.ndarray = field(repr=False)
    ks_statistic: float = float("nan")
    params: dict = field(default_factory=dict)

    @classmethod
    def from_scores(cls, model, densities, cdf_values, params=None) -> "EvalReport":
        cov = coverage_curve(cdf_values)
        return cls(model, log_likelihood_bits(densities), len(densities), cov.sorted_values,
                   np.sort(np.asarray(densities, dtype=float)), cov.ks_statistic, params or {})

    def to_dict(self, curves: bool = False) -> dict:
        out = {"model": self.model, "mean_log2_density": self.mean_log2_density, "n": self.n,
               "ks_statistic": self.ks_statistic, "params": self.params}
        if curves:
            out["coverage_curve"] = self.coverage_curve.tolist()
            out["sorted_density_curve"] = self.sorted_density_curve.tolist()
        return out

    def to_json(self, curves: bool = False) -> str:
        return json.dumps(self.to_dict(curves))


# --- ARCH(0,1) --------------------------------------------------------------

@dataclass(frozen=True)
class ArchModel:
    """
    Gaussian with time-varying scale driven by the previous squared return.

    ``form == "variance"``: ``var_t = alpha0 + alpha1 * e_{t-1}^2``;
    ``form == "std"``: ``sd_t = alpha0 + alpha1 * e_{t-1}^2``.
    ``e = y - mu``.
    """

    alpha0: float
    alpha1: float
    mu: float = 0.0
    form: str = "variance"

    def __post_init__(self):
        if not self.alpha0 > 0 or self.alpha1 < 0:
            raise DomainError("ARCH needs alpha0 > 0 and alpha1 >= 0")
        if self.form not in ARCH_FORMS:
            raise DomainError(f"unknown ARCH form {self.form!r}")

    def sd(self, y_prev):
        e2 = (np.asarray(y_prev, dtype=float) - self.mu) ** 2
        s = self.alpha0 + self.alpha1 * e2
        return np.sqrt(s) if self.form == "variance" else s

    def densities(self, y) -> np.ndarray:
        """Predictive densities of ``y[1:]`` given ``y[:-1]``."""
        y = np.asarray(y, dtype=float)
        s = self.sd(y[:-1])
        z = (y[1:] - self.mu) / s
        return np.exp(-0.5 * z * z) / (s * math.sqrt(2.0 * math.pi))

    def cdf(self, y) -> np.ndarray:
        """Predictive CDF values of ``y[1:]``."""
        y = np.asarray(y, dtype=float)
        return special.ndtr((y[1:] - self.mu) / self.sd(y[:-1]))


def _arch_nll(params, e, form, scale):
    a0, a1 = params[0] * scale[0], params[1] * scale[1]
    s = a0 + a1 * e[:-1] ** 2
    if form == "std":
        s = s * s
    if np.any(s <= 0):
        return np.inf
    return 0.5 * float(np.mean(np.log(2.0 * np.pi * s) + e[1:] ** 2 / s))


def fit_arch01(y, form: str = "variance"):
    """
    Gaussian maximum likelihood for ARCH(0,1).

    Returns ``(model, densities)`` where ``densities`` are the predictive
    densities of ``y[1:]``.  ``mu`` is the sample mean.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 50:
        raise InsufficientDataError("ARCH fit needs at least 50 observations")
    if form not in ARCH_FORMS:
        raise DomainError(f"unknown ARCH form {form!r}")
    mu = float(np.mean(y))
    e = y - mu
    v = float(np.mean(e * e))
    if v <= 0:
        raise FitFailureError("zero variance input")
    # parameters are optimized in units that make both of order one
    scale = (v, 1.0) if form == "variance" else (math.sqrt(v), 1.0 / math.sqrt(v))
    best = None
    for start in ([0.7, 0.3], [0.95, 0.05], [0.3, 0.8]):
        res = optimize.minimize(_arch_nll, start, args=(e, form, scale), method="Nelder-Mead",
                                bounds=[(1e-8, 10.0), (0.0, 10.0)],
                                options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    a0, a1 = best.x[0] * scale[0], best.x[1] * scale[1]
    model = ArchModel(float(a0), float(max(a1, 0.0)), mu, form)
    if not best.success or not np.isfinite(best.fun):
        raise FitFailureError(f"ARCH fit did not converge: {best.message}", best=model)
    return model, model.densities(y)


def arch_normalize(y, model: ArchModel) -> NormalizedSeries:
    """Normalize ``y[1:]`` with the ARCH predictive Gaussian of varying width."""
    x = np.clip(model.cdf(y), P_LO, P_HI)
    return NormalizedSeries(x, None, meta={"arch": asdict(model)})


# --- linear predictors ------------------------------------------------------

@dataclass
class LinearPredictor:
    """``v^t ~ beta[0] + sum_i beta[i] v^{t-i}``."""

    beta: np.ndarray
    residuals: np.ndarray

    @property
    def k(self) -> int:
        return self.beta.size - 1


def fit_linear_predictor(v, k: int) -> LinearPredictor:
    """
    Least squares fit of an order-``k`` linear predictor.

    The normal equations are solved for centred lags (a symmetric positive
    definite system), and the intercept is recovered from the means.  When
    every lag is constant the slopes are zero and the intercept is the mean.

    Raises
    ------
    RankError
        If the centred lag matrix is rank deficient but not identically zero.
    """
    v = np.asarray(v, dtype=float).ravel()
    if k < 0:
        raise DomainError("order must be nonnegative")
    if v.size <= k + 1:
        raise InsufficientDataError(f"need more than {k + 1} values for order {k}")
    target = v[k:]
    X = np.column_stack([v[k - i: v.size - i] for i in range(1, k + 1)]) if k else np.zeros((target.size, 0))
    xm, ym = X.mean(axis=0), target.mean()
    Xc, yc = X - xm, target - ym
    G = Xc.T @ Xc
    if k == 0 or not np.any(G):
        slopes = np.zeros(k)
    else:
        if np.linalg.matrix_rank(G) < k:
            raise RankError("lagged design matrix is rank deficient")
        try:
            slopes = linalg.solve(G, Xc.T @ yc, assume_a="pos")
        except linalg.LinAlgError as exc:
            raise RankError(str(exc)) from exc
    beta = np.r_[ym - xm @ slopes, slopes]
    return LinearPredictor(beta, target - beta[0] - X @ slopes)


# --- model chain ------------------------------------------------------------

CALIBRATIONS = ("fixed", "clamp-mle", "piecewise-mle", "empirical", "none")


def make_calibration(mode, batch, basis) -> Calibration:
    """Build the calibration named by ``mode`` (one of ``CALIBRATIONS``) from ``batch``."""
    if mode == "fixed":
        return Calibration()
    if mode == "clamp-mle":
        return fit_calibration_mle(batch, None, basis, "clamp")
    if mode == "piecewise-mle":
        return fit_calibration_mle(batch, None, basis, "piecewise")
    if mode == "empirical":
        return calibrate_empirical(batch, None, basis)
    if mode == "none":
        return Calibration.none()
    raise DomainError(f"unknown calibration mode {mode!r}")


def hcr_chain(y, model: MarginalModel, m: int, d: int = 2, prune_threshold: float = 0.0,
              calibration: str = "clamp-mle", name: Optional[str] = None) -> EvalReport:
    """
    Normalize ``y`` with ``model``, fit a degree-``m`` joint polynomial on
    windows of length ``d`` and score the pulled-back conditional densities
    of ``y[d-1:]``.
    """
    y = np.asarray(y, dtype=float)
    basis = build_basis(m)
    xs = marginals.normalize(y, model)
    w = build_windows(xs, d)
    t = estimate_coefficients(w, basis)
    if prune_threshold > 0:
        t = prune(t, prune_threshold)
    batch = predict_windows(t, basis, w)
    cal = make_calibration(calibration, batch, basis)
    rho_x = batch.density(basis, cal=cal)
    dens = rho_x * marginals.pdf(model, y[d - 1:])
    cdfv = batch.cdf(basis, cal=cal)
    params = {"m": m, "d": d, "prune_threshold": prune_threshold, "coefficients": len(t),
              "calibration": cal.to_dict(), "degenerate_contexts": batch.n_degenerate,
              "marginal": model.to_dict()}
    return EvalReport.from_scores(name or f"{model.family}+hcr(m={m})", dens, cdfv, params)


def _static(name, y, model, skip):
    tail = y[skip:]
    return EvalReport.from_scores(name, marginals.pdf(model, tail), marginals.cdf(model, tail),
                                  model.to_dict())


def evaluate_models(y, hcr_degrees=(2, 9), prune_threshold: float = 3.0,
                    calibration: str = "clamp-mle", arch_form: str = "variance") -> dict:
    """
    Score the baseline chain on ``y[1:]``: Gaussian, ARCH(0,1), Laplace, EPD
    and EPD normalization followed by HCR on ``(x^{t-1}, x^t)``.

    HCR models of degree above 2 are pruned at ``prune_threshold`` noise levels.
    """
    y = np.asarray(y, dtype=float).ravel()
    out = {}
    out["gaussian"] = _static("gaussian", y, marginals.fit_gaussian(y), 1)
    arch, dens = fit_arch01(y, arch_form)
    out["arch01"] = EvalReport.from_scores("arch01", dens, arch.cdf(y), asdict(arch))
    out["laplace"] = _static("laplace", y, marginals.fit_laplace(y), 1)
    epd = marginals.fit_epd(y)
    out["epd"] = _static("epd", y, epd, 1)
    for m in hcr_degrees:
        thr = prune_threshold if m > 2 else 0.0
        key = f"epd+hcr{m}"
        out[key] = hcr_chain(y, epd, m, 2, thr, calibration, name=key)
    return out
