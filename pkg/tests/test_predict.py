import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from conftest import rejection_sample
from hcr.errors import DegenerateContextError, DomainError, InsufficientDataError, ShapeError
from hcr.estimate import CoefficientTensor, build_windows, estimate_coefficients, eval_joint_density, prune
from hcr.polybasis import build_basis
from hcr.predict import (
    Calibration,
    PredictedDensity1D,
    PredictionBatch,
    calibrate_empirical,
    condition,
    condition_batch,
    condition_numerator,
    fit_calibration_mle,
    predict_windows,
    predicted_density_at,
)

B5 = build_basis(5)
SQ3 = math.sqrt(3)


def random_tensor(rng, degrees, density=1.0):
    shape = tuple(m + 1 for m in degrees)
    J = np.indices(shape).reshape(len(shape), -1).T
    keep = (rng.random(len(J)) < density) | np.all(J == 0, axis=1)
    vals = rng.normal(0, 0.1, keep.sum())
    vals[np.all(J[keep] == 0, axis=1)] = 1.0
    return CoefficientTensor(degrees, J[keep], vals)


def linear_batch(c):
    """Polynomials ``1 + c_i f_1``."""
    c = np.asarray(c, dtype=float)
    return PredictionBatch(np.column_stack([np.ones_like(c), c]), np.ones_like(c), np.zeros(c.size, bool))


def test_linearity_of_numerator():
    rng = np.random.default_rng(0)
    t1, t2 = random_tensor(rng, (3, 2, 2)), random_tensor(rng, (3, 2, 2))
    combo = CoefficientTensor(t1.degrees, t1.indices, 2.5 * t1.values - 0.7 * t2.values)
    C = rng.uniform(size=(50, 2))
    np.testing.assert_allclose(condition_numerator(combo, B5, C),
                               2.5 * condition_numerator(t1, B5, C) - 0.7 * condition_numerator(t2, B5, C),
                               atol=1e-13)


def test_unit_integral_and_calibrated_integral():
    rng = np.random.default_rng(1)
    t = random_tensor(rng, (5, 5, 5), density=0.5)
    batch = condition_batch(t, B5, rng.uniform(size=(200, 2)))
    ok = ~batch.degenerate
    assert np.all(batch.coeffs[ok, 0] == 1.0)
    cal = Calibration()
    for i in np.flatnonzero(ok)[:5]:
        p = batch[int(i)]
        dens = p.density(B5, cal)
        val, _ = integrate.quad(dens, 0, 1, limit=200, epsabs=1e-10)
        assert val == pytest.approx(1.0, abs=1e-6)
        assert dens(0.37) == pytest.approx(predicted_density_at(p, B5, 0.37, cal), rel=1e-14)
        raw, _ = integrate.quad(lambda x: p.raw(B5, x), 0, 1)
        assert raw == pytest.approx(1.0, abs=1e-12)


def test_consistency_with_joint():
    rng = np.random.default_rng(2)
    t = random_tensor(rng, (4, 3, 2))
    C = rng.uniform(size=(30, 2))
    x = rng.uniform(size=30)
    batch = condition_batch(t, B5, C)
    joint = eval_joint_density(t, B5, np.column_stack([x, C]))
    ok = ~batch.degenerate
    np.testing.assert_allclose(joint[ok] / batch.b0[ok], batch.raw(B5, x)[ok], atol=1e-9)


def test_independent_tensor_returns_marginal():
    c = np.array([1.0, 0.2, -0.1, 0.05])
    J = np.array([[j, 0, 0] for j in range(4)])
    t = CoefficientTensor((3, 2, 2), J, c)
    p = condition(t, B5, [0.13, 0.77])
    np.testing.assert_allclose(p.coeffs, c, atol=1e-15)
    assert p.b0 == pytest.approx(1.0)


def test_constant_tensor_is_uniform():
    t = CoefficientTensor((2, 2), [[0, 0]], [1.0])
    p = condition(t, B5, [0.4])
    np.testing.assert_array_equal(p.raw(B5, np.linspace(0, 1, 5)), 1.0)
    assert predicted_density_at(p, B5, 0.3, Calibration()) == pytest.approx(1.0)


def test_degenerate_context():
    # b0 = 1 + a_(0,1) f_1(c) is negative near c = 0 when a_(0,1) = 0.9
    t = CoefficientTensor((1, 1), [[0, 0], [0, 1]], [1.0, 0.9])
    with pytest.raises(DegenerateContextError) as err:
        condition(t, B5, [0.0])
    assert err.value.b0 < 0
    batch = condition_batch(t, B5, [[0.0], [1.0]])
    assert batch.n_degenerate == 1
    np.testing.assert_array_equal(batch.coeffs[0], [1.0, 0.0])


def test_context_errors():
    t = CoefficientTensor((1, 1), [[0, 0]], [1.0])
    with pytest.raises(ShapeError):
        condition(t, B5, [0.1, 0.2])
    with pytest.raises(DomainError):
        condition(t, B5, [1.5])


def test_predict_windows_uses_current_as_actual():
    x = np.random.default_rng(3).uniform(size=400)
    w = build_windows(x, 3)
    t = estimate_coefficients(w, B5, 3)
    batch = predict_windows(t, B5, w)
    np.testing.assert_array_equal(batch.actual, x[2:])
    assert len(batch) == w.n


def test_piecewise_examples():
    cal = Calibration()
    assert cal(-0.5) == pytest.approx(0.15)
    assert cal(10.0) == pytest.approx(3.2)
    assert cal(1.0) == 1.0


def test_unit_density_stays_unit():
    batch = linear_batch(np.zeros(3))
    for cal in (Calibration(), Calibration.clamp(0.2), Calibration("empirical", grid_z=(0.0, 2.0), grid_phi=(0.0, 2.0))):
        np.testing.assert_allclose(batch.density(B5, np.array([0.1, 0.5, 0.9]), cal), 1.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 5.0),
       st.lists(st.floats(-50, 50), min_size=2, max_size=20))
def test_phi_monotone_and_floored(floor, slope, intercept, z):
    cal = Calibration("piecewise", floor=floor, slope=slope, intercept=intercept)
    z = np.sort(z)
    v = cal(z)
    assert np.all(np.diff(v) >= 0)
    assert np.all(v >= floor)


def test_calibration_round_trip():
    for cal in (Calibration(), Calibration.none(), Calibration.clamp(0.3),
                Calibration("empirical", grid_z=(0.1, 1.0), grid_phi=(0.2, 0.9))):
        assert Calibration.from_dict(cal.to_dict()) == cal


def test_cdf():
    batch = linear_batch([0.0, 0.3])
    x = np.array([0.25, 1.0])
    got = batch.cdf(B5, x)
    # integral of 1 + c sqrt(3)(2u - 1) on [0, x] is x + c sqrt(3)(x^2 - x)
    np.testing.assert_allclose(got, x + np.array([0.0, 0.3]) * SQ3 * (x * x - x), atol=1e-14)
    np.testing.assert_allclose(batch.cdf(B5, np.ones(2), Calibration()), 1.0, atol=1e-12)


def overconfident_data(n, rng, cmax=0.25, factor=2.0):
    # truth 1 + c f_1, prediction scales the deviation: 1 + factor c f_1
    c = rng.uniform(-cmax, cmax, n)
    x = np.empty(n)
    for i, ci in enumerate(c):
        x[i] = rejection_sample(lambda u: 1 + ci * SQ3 * (2 * u - 1), 1 + abs(ci) * SQ3, 1, rng)[0]
    return linear_batch(factor * c), x


def test_empirical_calibration_overconfident():
    # the probability ratio is E[truth | prediction = z] = (1 + z) / 2
    batch, x = overconfident_data(20_000, np.random.default_rng(4))
    cal = calibrate_empirical(batch, x, B5)
    z = np.array([0.5, 0.8, 1.2, 1.5])
    np.testing.assert_allclose(cal(z), (1 + z) / 2, atol=0.06)
    assert (cal(1.6) - cal(1.0)) / 0.6 < 1


def test_empirical_calibration_constant_predictions():
    batch = linear_batch(np.zeros(500))
    x = np.random.default_rng(5).uniform(size=500)
    cal = calibrate_empirical(batch, x, B5)
    assert cal(1.0) == pytest.approx(1.0)


def test_empirical_calibration_is_monotone():
    batch, x = overconfident_data(3000, np.random.default_rng(6))
    cal = calibrate_empirical(batch, x, B5)
    assert np.all(np.diff(cal.grid_phi) >= 0) and min(cal.grid_phi) > 0


def test_mle_clamp_inactive_returns_smallest():
    # predictions 1 + (c/3) f_1 stay above 1 - sqrt(3)/6 > 0.5, so any a <= 0.5 ties;
    # the actuals follow the much sharper 1 + c f_1, so flattening the low side only hurts
    batch, x = overconfident_data(3000, np.random.default_rng(7), cmax=0.5, factor=1 / 3)
    grid = np.linspace(0.0, 0.5, 11)
    ll = [np.mean(np.log(batch.density(B5, x, Calibration.clamp(a)))) for a in grid]
    np.testing.assert_allclose(ll, ll[0], atol=1e-12)
    cal = fit_calibration_mle(batch, x, B5)
    assert cal.kind == "clamp" and cal.floor == 0.0


def test_mle_clamp_forced_positive():
    # 1 + 0.9 f_1 is negative for u < 0.18; put 10% of the actuals there
    rng = np.random.default_rng(8)
    n = 1000
    batch = linear_batch(np.full(n, 0.9))
    neg = 0.5 * (1 - 1 / (0.9 * SQ3))
    x = np.where(rng.random(n) < 0.1, rng.uniform(0, neg, n), rng.uniform(neg, 1, n))
    assert np.mean(batch.raw(B5, x) < 0) > 0.05
    cal = fit_calibration_mle(batch, x, B5)
    assert cal.floor > 0
    assert np.all(batch.density(B5, x, cal) > 0)


def test_mle_piecewise_improves_on_default():
    batch, x = overconfident_data(2000, np.random.default_rng(9))
    cal = fit_calibration_mle(batch, x, B5, family="piecewise")
    ll = lambda c: np.mean(np.log(batch.density(B5, x, c)))
    assert ll(cal) >= ll(Calibration()) - 1e-9


def test_calibration_needs_data():
    with pytest.raises(InsufficientDataError):
        fit_calibration_mle(linear_batch(np.zeros(10)), np.full(10, 0.5), B5)
    with pytest.raises(ShapeError):
        calibrate_empirical(linear_batch(np.zeros(200)), np.full(100, 0.5), B5)


def test_pruned_tensor_normalization():
    rng = np.random.default_rng(10)
    x = rng.beta(0.8, 0.8, 5000)
    t = prune(estimate_coefficients(build_windows(x, 3), B5, 4), 2.0)
    batch = condition_batch(t, B5, rng.uniform(size=(1000, 2)))
    assert np.all(batch.coeffs[:, 0] == 1.0)
    norm = PredictionBatch(batch.coeffs, batch.b0, batch.degenerate).normalizers(B5, Calibration.none())
    np.testing.assert_allclose(norm, 1.0, atol=1e-12)
