"""Hierarchical correlation reconstruction for time series."""

__version__ = "0.1.0"

from .errors import HCRError
from .polybasis import OrthoBasis, build_basis, eval_basis, integrate_product
from .marginals import (
    MarginalModel,
    NormalizedSeries,
    SeriesFrame,
    density_pullback,
    fit_epd,
    fit_gaussian,
    fit_laplace,
    log_returns,
    normalize,
)
from .estimate import (
    CoefficientTensor,
    WindowSet,
    build_windows,
    estimate_coefficients,
    eval_joint_density,
    noise_sigma,
    prune,
)
from .predict import (
    Calibration,
    PredictedDensity1D,
    PredictionBatch,
    calibrate_empirical,
    condition,
    condition_batch,
    fit_calibration_mle,
    predict_windows,
    predicted_density_at,
)
from .adaptive import AdaptiveState, adaptive_update, fit_time_trend, run_adaptive
from .crossdeps import (
    PanelFrame,
    covariance_pca,
    eigendecompose,
    pair_coeff_matrix,
    pair_trend_matrix,
)
from .evalsuite import (
    coverage_curve,
    evaluate_models,
    fit_arch01,
    fit_linear_predictor,
    log_likelihood_bits,
    sorted_prediction_curve,
)
