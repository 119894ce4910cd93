from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gbll.cluster import (
    StlDecomposition,
    build_features,
    cluster_countries,
    cluster_features,
    elbow_select,
    inertia_of,
    kmeans,
    lc_kappas,
    loess,
    min_max,
    seasonal_strength,
    stl,
    trend_slope,
)
from gbll.errors import ConfigError, CurveTooShort, EmptyClusterUnrecoverable, SeriesTooShort, ZeroVariance
from synth import make_tensor

T = np.arange(208)


def brute_force_2(X):
    """Exhaustive optimum over all 2-partitions into non-empty groups."""
    n = X.shape[0]
    best = np.inf
    for mask in range(1, 2 ** (n - 1)):
        sel = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        cost = sum(np.sum((g - g.mean(axis=0)) ** 2) for g in (X[sel], X[~sel]))
        best = min(best, cost)
    return best


# ------------------------------------------------------------------ STL


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_additivity_exact(seed, scale):
    rng = np.random.default_rng(seed)
    y = scale * (rng.normal(size=208) + np.sin(2 * np.pi * T / 52) + rng.normal() * T / 52)
    d = stl(y, inner=2)
    total = d.trend + d.seasonal + d.remainder
    # bit-exact wherever y - (trend + seasonal) is itself a float; otherwise one rounding away
    u = d.trend + d.seasonal
    for i in range(208):
        if Fraction(y[i]) - Fraction(u[i]) == Fraction(float(y[i] - u[i])):
            assert total[i] == y[i]
        else:
            assert abs(total[i] - y[i]) <= np.spacing(abs(u[i]) + abs(d.remainder[i]))


def test_additivity_bit_exact_on_inputs_away_from_zero():
    for y in (np.sin(2 * np.pi * T / 52) + 3, 0.3 * T + 2.0, np.cos(4 * np.pi * T / 52) + 5):
        d = stl(y)
        assert np.array_equal(d.trend + d.seasonal + d.remainder, y)


def test_ramp_has_no_seasonal():
    slope = 0.3
    d = stl(slope * T)
    assert np.max(np.abs(d.seasonal)) <= 1e-6 * slope * 208
    np.testing.assert_allclose(d.trend, slope * T, atol=1e-6)


def test_pure_sine():
    y = np.sin(2 * np.pi * T / 52)
    d = stl(y)
    assert np.max(np.abs(d.seasonal - y)) <= 0.05
    assert np.max(np.abs(d.trend)) <= 0.05
    assert seasonal_strength(d) >= 0.9


def test_sine_plus_noise_strength():
    y = np.sin(2 * np.pi * T / 52) + 0.1 * np.random.default_rng(1).standard_normal(208)
    assert seasonal_strength(stl(y)) >= 0.9


def test_fixed_inner_passes():
    y = np.sin(2 * np.pi * T / 52) + 0.01 * T
    d2 = stl(y, inner=2)
    assert np.max(np.abs(d2.trend + d2.seasonal + d2.remainder - y)) <= 1e-15
    assert np.max(np.abs(d2.seasonal - stl(y).seasonal)) < 0.05


def test_robust_outlier_stays_in_remainder():
    t = np.arange(520)
    noise = 0.5 * np.random.default_rng(0).standard_normal(520)
    y = np.sin(2 * np.pi * t / 52) + 0.01 * t + noise
    y[50] += 10
    assert abs(stl(y, robust=True).remainder[50] - (10 + noise[50])) < 0.25
    assert stl(y).remainder[50] < 9.5


def test_close_to_reference_stl():
    sm = pytest.importorskip("statsmodels.tsa.seasonal")
    rng = np.random.default_rng(2)
    y = 2 * np.sin(2 * np.pi * T / 52) + 0.01 * T + 0.2 * rng.standard_normal(208)
    ours = stl(y)
    ref = sm.STL(y, period=52, seasonal=10001, trend=105, seasonal_deg=0).fit()
    assert np.max(np.abs(ours.seasonal - ref.seasonal)) < 1e-3
    assert np.max(np.abs(ours.trend - ref.trend)) < 1e-3


def test_stl_too_short():
    with pytest.raises(SeriesTooShort):
        stl(np.zeros(103))


def test_loess_reproduces_lines():
    y = 3.0 - 0.2 * np.arange(30)
    np.testing.assert_allclose(loess(y, 7), y, atol=1e-10)
    np.testing.assert_allclose(loess(y, 99, positions=[-2.0, 31.0]), [3.4, -3.2], atol=1e-10)


def test_trend_slope_and_strength_examples():
    line = StlDecomposition(2 + 0.01 * np.arange(1, 101), np.zeros(100), np.ones(100) * 0.0)
    assert np.isclose(trend_slope(line), 0.01, rtol=0, atol=1e-15)
    const = StlDecomposition(np.full(100, 4.0), np.zeros(100), np.zeros(100))
    assert trend_slope(const) == 0.0
    with pytest.raises(ZeroVariance):
        seasonal_strength(const)
    s = np.sin(np.arange(100.0))
    assert seasonal_strength(StlDecomposition(np.zeros(100), s, np.zeros(100))) == 1.0
    assert seasonal_strength(StlDecomposition(np.zeros(100), np.zeros(100), s)) == 0.0


@given(st.floats(-100, 100))
@settings(max_examples=8, deadline=None)
def test_slope_invariant_to_constant(c):
    y = np.sin(2 * np.pi * T / 52) - 0.02 * T
    assert np.isclose(trend_slope(stl(y + c)), trend_slope(stl(y)), atol=1e-10)


# --------------------------------------------------------------- K-means


def test_separated_clouds():
    rng = np.random.default_rng(0)
    a = rng.normal(0, 0.1, (6, 2))
    b = rng.normal(10, 0.1, (5, 2))
    res = kmeans(np.vstack([a, b]), 2)
    assert len(set(res.labels[:6])) == 1 and len(set(res.labels[6:])) == 1 and res.labels[0] != res.labels[6]
    scatter = np.sum((a - a.mean(0)) ** 2) + np.sum((b - b.mean(0)) ** 2)
    assert np.isclose(res.inertia, scatter, rtol=1e-12)


def test_k_equals_j():
    X = np.random.default_rng(1).normal(size=(5, 2))
    res = kmeans(X, 5)
    assert res.inertia == 0.0 and sorted(res.labels) == [1, 2, 3, 4, 5]


def test_too_few_points():
    with pytest.raises(EmptyClusterUnrecoverable):
        kmeans(np.zeros((2, 1)), 3)
    with pytest.raises(ConfigError):
        kmeans(np.zeros((2, 1)), 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(1, 2))
def test_brute_force_equivalence(seed, J, d):
    X = np.random.default_rng(seed).normal(size=(J, d))
    res = kmeans(X, 2)
    assert abs(res.inertia - brute_force_2(X)) <= 1e-9 * max(1.0, brute_force_2(X))
    assert np.isclose(inertia_of(X, res.labels, res.centroids), res.inertia, rtol=1e-8, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lloyd_history_and_restart_monotone(seed):
    X = np.random.default_rng(seed).normal(size=(20, 2))
    res = kmeans(X, 3, restarts=1)
    assert all(b <= a + 1e-12 for a, b in zip(res.history, res.history[1:]))
    inertias = [kmeans(X, 3, restarts=r).inertia for r in (1, 5, 25)]
    assert inertias[0] >= inertias[1] >= inertias[2]


def test_labels_ordered_by_centroid():
    X = np.array([[5.0], [5.1], [-3.0], [-3.1], [0.0], [0.1]])
    res = kmeans(X, 3)
    assert list(res.labels) == [3, 3, 1, 1, 2, 2]


def test_elbow_examples():
    assert elbow_select({1: 100, 2: 20, 3: 18, 4: 17, 5: 16}) == 2
    assert elbow_select([100, 60, 20, 18, 17]) == 3
    assert elbow_select([100, 60, 20, 18, 17], override=4) == 4
    with pytest.raises(CurveTooShort):
        elbow_select([3, 2])
    with pytest.raises(CurveTooShort):
        elbow_select({2: 3, 3: 2, 4: 1})


# -------------------------------------------------------------- features


def test_min_max():
    np.testing.assert_array_equal(min_max(np.array([2.0, 4.0, 3.0])), [0, 1, 0.5])
    np.testing.assert_array_equal(min_max(np.array([2.0, 2.0])), [0, 0])


def test_feature_methods():
    tensor = make_tensor(J=6, T=208, seed=3)
    k = lc_kappas(tensor)
    assert k.shape == (6, 208)
    f1 = build_features(tensor, k, 1)
    assert f1.matrix.shape == (6, 208) and np.array_equal(f1.matrix, k)
    f2 = build_features(tensor, k, "slope")
    assert f2.matrix.shape == (6, 1)
    f3 = build_features(tensor, k, 3)
    assert f3.matrix.min(axis=0).tolist() == [0.0, 0.0] and f3.matrix.max(axis=0).tolist() == [1.0, 1.0]
    with pytest.raises(ConfigError):
        build_features(tensor, k, 4)


def test_country_order_invariance():
    tensor = make_tensor(J=7, T=208, seed=4)
    perm = ["C03", "C06", "C00", "C05", "C01", "C04", "C02"]
    for method in (1, 2, 3):
        a = cluster_countries(tensor, method, 3).assignments
        b = cluster_countries(tensor.subset(perm), method, 3).assignments
        assert a == b


def test_elbow_used_without_k():
    tensor = make_tensor(J=6, T=208, seed=5)
    res = cluster_countries(tensor, 2)
    assert res.k_curve is not None and sorted(res.k_curve) == list(range(1, 7))
    assert len(set(res.labels)) == elbow_select(res.k_curve)
