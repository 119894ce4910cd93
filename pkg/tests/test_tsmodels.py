import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gbll.errors import RankDeficient, SeriesTooShort
from gbll.tsmodels import (
    ArimaFit,
    HarmonicFit,
    _css,
    _css_and_grad,
    advance_week_fracs,
    aicc,
    fit_arima,
    fit_harmonics,
    forecast_arima,
    forecast_kappa,
    forecast_series,
    harmonic_design,
    hannan_rissanen,
    is_invertible,
    is_stationary,
)

W208 = (np.arange(208) % 52) / 52
SMALL_GRID = tuple((p, d, q) for p in range(2) for d in (0, 1) for q in range(2))


def _ar1(phi, n, seed, burn=100):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n + burn)
    y = np.zeros_like(z)
    for t in range(1, y.size):
        y[t] = phi * y[t - 1] + z[t]
    return y[burn:]


def test_exact_sine_recovery():
    harm, resid = fit_harmonics(3 * np.sin(2 * np.pi * W208), W208)
    np.testing.assert_allclose(harm.betas, [3, 0, 0, 0], atol=1e-8)
    assert harm.any_significant
    np.testing.assert_allclose(resid, 0, atol=1e-8)


def test_biannual_only():
    rng = np.random.default_rng(0)
    y = np.sin(4 * np.pi * W208) + 0.1 * rng.standard_normal(208)
    harm, _ = fit_harmonics(y, W208)
    assert harm.pvalues[2] < 0.05 and harm.pvalues[0] >= 0.05


def test_noise_zeroes_betas():
    # seed chosen so that no coefficient is significant
    for seed in range(50):
        y = np.random.default_rng(seed).standard_normal(208)
        harm, resid = fit_harmonics(y, W208)
        if not harm.any_significant:
            break
    else:
        pytest.fail("no seed without significant harmonics")
    assert np.all(harm.betas == 0) and np.array_equal(resid, y)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ols_orthogonality(seed):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(208) + rng.normal(size=4) @ harmonic_design(W208).T
    X = np.column_stack([np.ones(208), harmonic_design(W208)])
    coef = np.linalg.lstsq(X, y, rcond=None)[0]
    r = y - X @ coef
    assert np.max(np.abs(X.T @ r)) <= 1e-8 * np.linalg.norm(X) * np.linalg.norm(y)
    harm, resid = fit_harmonics(y, W208)
    if harm.any_significant:
        np.testing.assert_allclose(resid, y - harmonic_design(W208) @ coef[1:], atol=1e-10)
        assert np.isclose(harm.intercept, coef[0])


def test_harmonic_errors():
    with pytest.raises(SeriesTooShort):
        fit_harmonics(np.zeros(11), np.arange(11) / 52)
    with pytest.raises(RankDeficient):
        fit_harmonics(np.arange(20.0), np.tile([0, 0.25, 0.5, 0.75], 5))
    with pytest.raises(SeriesTooShort):
        fit_arima(np.zeros(19))


def test_white_noise_selects_000():
    rng = np.random.default_rng(0)
    y = rng.standard_normal(208)
    fit = fit_arima(y)
    assert fit.order == (0, 0, 0)
    assert abs(fit.intercept) <= 3 / np.sqrt(208)


def test_ar1_recovery():
    fit = fit_arima(_ar1(0.7, 2000, 0))
    assert fit.order[0] >= 1
    assert 0.65 <= fit.ar[0] <= 0.75


def test_ar1_close_to_statsmodels():
    sm = pytest.importorskip("statsmodels.tsa.arima.model")
    y = _ar1(0.7, 500, 1)
    ours = fit_arima(y, ((1, 0, 0),))
    theirs = sm.ARIMA(y, order=(1, 0, 0)).fit()
    assert abs(ours.ar[0] - theirs.arparams[0]) < 0.01


def test_ramp_selects_difference():
    rng = np.random.default_rng(0)
    y = 0.1 * np.arange(208) + rng.standard_normal(208)
    fit = fit_arima(y)
    assert fit.order[1] == 1
    assert abs(fit.intercept - 0.1) <= 0.02


def test_selection_is_scale_invariant():
    rng = np.random.default_rng(4)
    y = _ar1(0.5, 200, 4) + 0.05 * np.arange(200) * rng.random()
    assert fit_arima(y, SMALL_GRID).order == fit_arima(0.01 * y, SMALL_GRID).order


def test_returned_fit_is_valid_and_not_worse_than_start():
    for seed in range(5):
        y = _ar1(0.4, 150, seed) + np.convolve(np.random.default_rng(seed).standard_normal(150), [1, 0.5], "same")
        for order in ((1, 0, 1), (2, 0, 1), (0, 1, 2), (3, 0, 3)):
            fit = fit_arima(y, (order,))
            assert is_stationary(fit.ar) and is_invertible(fit.ma)
            assert fit.loglik_proxy <= fit.start_css * (1 + 1e-12)


def test_analytic_gradient_matches_finite_difference():
    y = _ar1(0.6, 120, 2)
    z = np.diff(y)
    params = np.array([0.01, 0.3, -0.2, 0.25])
    _, g = _css_and_grad(params, z, 2, 1, 1)
    num = np.array([
        (_css(params + e, z, 2, 1, 1) - _css(params - e, z, 2, 1, 1)) / 2e-6 for e in np.eye(4) * 1e-6
    ])
    np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-6)


def test_hannan_rissanen_start_is_valid():
    y = _ar1(0.95, 100, 3)
    start = hannan_rissanen(y, 3, 3)
    assert is_stationary(start[1:4]) and is_invertible(start[4:])


def test_root_checks():
    assert is_stationary([0.5]) and not is_stationary([1.0]) and not is_stationary([1.2])
    assert is_invertible([0.5]) and not is_invertible([-1.0])
    assert is_stationary([]) and is_invertible([])


def test_aicc_edge():
    assert aicc(1.0, 3, 2) == np.inf
    assert np.isfinite(aicc(10.0, 100, 3))


def _fit(order, ar=(), ma=(), const=0.0, tail_z=(), tail_e=(), last=0.0):
    return ArimaFit(order, np.array(ar, float), np.array(ma, float), 0.0, 1.0, 1.0, 0.0, const,
                    tail_z=np.array(tail_z, float), tail_e=np.array(tail_e, float), last_level=last)


def test_random_walk_with_drift():
    zero = HarmonicFit(np.zeros(4), np.zeros(4), np.ones(4), False)
    fc = forecast_kappa(10, zero, _fit((0, 1, 0), const=0.3, last=5.0), 0.5)
    np.testing.assert_allclose(fc, 5.0 + 0.3 * np.arange(1, 11), atol=1e-12)


def test_pure_harmonic_forecast_periodic():
    harm = HarmonicFit(np.array([1.0, -0.5, 0.2, 0.1]), np.zeros(4), np.zeros(4), True)
    fc = forecast_kappa(156, harm, _fit((0, 0, 0)), 17 / 52)
    np.testing.assert_allclose(fc[:52], fc[52:104], atol=1e-12)
    np.testing.assert_allclose(fc[:52], fc[104:], atol=1e-12)
    np.testing.assert_allclose(fc[:3], harm.evaluate(np.array([18, 19, 20]) / 52), atol=1e-12)


def test_ar1_closed_form_predictor():
    phi, mean, r_T = 0.7, 2.0, 3.5
    fit = _fit((1, 0, 0), ar=[phi], const=mean * (1 - phi), tail_z=[r_T])
    u = np.arange(1, 21)
    np.testing.assert_allclose(forecast_arima(fit, 20), mean + phi**u * (r_T - mean), atol=1e-12)


def test_forecast_prefix_consistency():
    y = _ar1(0.5, 208, 5) + np.sin(2 * np.pi * W208)
    long = forecast_series(y, W208, 52, SMALL_GRID)
    short = forecast_series(y, W208, 13, SMALL_GRID)
    assert np.array_equal(long[:13], short)


@given(st.integers(0, 51), st.integers(1, 5))
def test_week_phase(pos, u):
    fr = advance_week_fracs(pos / 52, 52 * u)
    assert fr[-1] == pos / 52
    assert fr[0] == ((pos + 1) % 52) / 52
