"""Grouping countries by mortality dynamics.

Features come from single-population Lee-Carter time indices: the raw index
(method 1), the slope of its STL trend (method 2), or the slope together with
the STL seasonal strength after min-max scaling (method 3). Groups are found
with K-means (K-means++ seeding, best of several restarts).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gbll.data import MortalityTensor, WEEKS_PER_YEAR, log_panel
from gbll.errors import (
    ConfigError,
    CurveTooShort,
    EmptyClusterUnrecoverable,
    SeriesTooShort,
    ZeroVariance,
)
from gbll.lee_carter import fit_lc

METHODS = {1: "raw_series", 2: "slope", 3: "slope_and_strength"}


# --------------------------------------------------------------------- STL


@dataclass(frozen=True)
class StlDecomposition:
    trend: np.ndarray
    seasonal: np.ndarray
    remainder: np.ndarray
    period: int = WEEKS_PER_YEAR


def loess(y, window: int, weights=None, positions=None) -> np.ndarray:
    """Local-linear tricube smoother of ``y`` (observed at 0..n-1) evaluated at ``positions``."""
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    x = np.arange(n, dtype=np.float64)
    rw = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    pos = x if positions is None else np.asarray(positions, dtype=np.float64)
    q = int(window)
    out = np.empty(pos.size)
    for i, x0 in enumerate(pos):
        dist = np.abs(x - x0)
        if q < n:
            h = np.partition(dist, q - 1)[q - 1]
        else:
            h = dist.max() + (q - n) / 2.0
        h = max(h, 1e-12)
        u = dist / h
        w = np.where(u < 1.0, (1.0 - u**3) ** 3, 0.0) * rw
        sw = w.sum()
        if sw <= 0:
            out[i] = y[int(np.argmin(dist))]
            continue
        xm = (w @ x) / sw
        ym = (w @ y) / sw
        dx = x - xm
        sxx = w @ (dx * dx)
        slope = (w @ (dx * (y - ym))) / sxx if sxx > 1e-12 * h * h * sw else 0.0
        out[i] = ym + slope * (x0 - xm)
    return out


def _moving_average(y: np.ndarray, k: int) -> np.ndarray:
    c = np.cumsum(np.concatenate([[0.0], y]))
    return (c[k:] - c[:-k]) / k


def _next_odd(v: float) -> int:
    n = int(np.ceil(v))
    return n if n % 2 else n + 1


def stl(
    series,
    period: int = WEEKS_PER_YEAR,
    robust: bool = False,
    trend_window: int = 105,
    inner: int | None = None,
    outer: int | None = None,
    lowpass_window: int | None = None,
    tol: float = 1e-12,
    max_inner: int = 100,
) -> StlDecomposition:
    """STL decomposition with a periodic seasonal component.

    The seasonal smoother is the limit of an infinitely wide cycle-subseries
    window: each subseries is replaced by its (robustness-weighted) mean.
    With ``inner=None`` the inner loop runs until the seasonal component
    changes by less than ``tol`` times the series range (at most
    ``max_inner`` passes); an integer runs exactly that many passes.
    """
    y = np.asarray(series, dtype=np.float64)
    n = y.size
    if n < 2 * period:
        raise SeriesTooShort(f"STL needs at least {2 * period} points, got {n}")
    if outer is None:
        outer = 15 if robust else 0
    n_l = lowpass_window or _next_odd(period)
    phase = np.arange(-period, n + period) % period
    rw = np.ones(n)
    trend = np.zeros(n)
    seasonal = np.zeros(n)
    scale = max(float(np.ptp(y)), 1e-300)
    passes = max_inner if inner is None else inner
    for it in range(outer + 1):
        for _ in range(passes):
            previous = seasonal
            detr = y - trend
            means = np.array(
                [np.average(detr[s::period], weights=rw[s::period]) if rw[s::period].sum() > 0 else detr[s::period].mean()
                 for s in range(period)]
            )
            c_ext = means[phase]
            low = _moving_average(_moving_average(_moving_average(c_ext, period), period), 3)
            low = loess(low, n_l)
            seasonal = c_ext[period : period + n] - low
            trend = loess(y - seasonal, trend_window, rw)
            if inner is None and np.max(np.abs(seasonal - previous)) <= tol * scale:
                break
        if it < outer:
            r = np.abs(y - trend - seasonal)
            h = 6.0 * np.median(r)
            if h <= 0:
                break
            u = r / h
            rw = np.where(u < 1.0, (1.0 - u**2) ** 2, 0.0)
    return StlDecomposition(trend, seasonal, _exact_remainder(y, trend, seasonal), period)


def _exact_remainder(y: np.ndarray, trend: np.ndarray, seasonal: np.ndarray) -> np.ndarray:
    """Remainder chosen so that ``trend + seasonal + remainder`` rounds back to ``y`` exactly."""
    base = trend + seasonal
    r = y - base
    for _ in range(8):
        off = base + r != y
        if not off.any():
            break
        r[off] = np.nextafter(r[off], np.where(base[off] + r[off] < y[off], np.inf, -np.inf))
    return r


def trend_slope(decomp: StlDecomposition) -> float:
    """OLS slope of the trend against t = 1..T."""
    tr = decomp.trend
    t = np.arange(1, tr.size + 1, dtype=np.float64)
    tc = t - t.mean()
    return float(tc @ (tr - tr.mean()) / (tc @ tc))


def seasonal_strength(decomp: StlDecomposition) -> float:
    sr = decomp.seasonal + decomp.remainder
    v = float(np.var(sr))
    if v == 0.0:
        raise ZeroVariance("seasonal + remainder has zero variance")
    return max(0.0, 1.0 - float(np.var(decomp.remainder)) / v)


# ----------------------------------------------------------------- K-means


@dataclass(frozen=True)
class ClusterResult:
    labels: np.ndarray  # cluster id 1..Q per feature row
    centroids: np.ndarray  # (Q, d)
    inertia: float
    k_curve: dict | None = None
    countries: tuple[str, ...] | None = None
    history: tuple[float, ...] = ()

    @property
    def assignments(self) -> dict[str, int]:
        if self.countries is None:
            return {str(i): int(l) for i, l in enumerate(self.labels)}
        return {c: int(l) for c, l in zip(self.countries, self.labels)}


def inertia_of(X: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    """Within-cluster sum of squares for 1-based ``labels``."""
    diff = X - centroids[labels - 1]
    return float(np.sum(diff * diff))


def _kmeanspp(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            rest = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(rest))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return X[chosen].copy()


def _lloyd(X: np.ndarray, centroids: np.ndarray, max_iter: int):
    K = centroids.shape[0]
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new = np.argmin(d2, axis=1)
        # repair empty clusters with the point farthest from its centroid
        for k in range(K):
            if not np.any(new == k):
                own = d2[np.arange(X.shape[0]), new]
                counts = np.bincount(new, minlength=K)
                own = np.where(counts[new] > 1, own, -1.0)
                far = int(np.argmax(own))
                new[far] = k
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centroids = np.array([X[labels == k].mean(axis=0) for k in range(K)])
        history.append(float(np.sum((X - centroids[labels]) ** 2)))
    return labels, centroids, history


def kmeans(features, K: int, restarts: int = 25, seed: int = 42, max_iter: int = 300) -> ClusterResult:
    """Best-of-``restarts`` Lloyd K-means with K-means++ seeding."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    J = X.shape[0]
    if K < 1:
        raise ConfigError("K must be >= 1")
    if J < K:
        raise EmptyClusterUnrecoverable(f"cannot form {K} clusters from {J} points")
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        labels, centroids, history = _lloyd(X, _kmeanspp(X, K, rng), max_iter)
        inertia = float(np.sum((X - centroids[labels]) ** 2))
        if best is None or inertia < best[2]:
            best = (labels, centroids, inertia, history)
    labels, centroids, inertia, history = best
    # relabel 1..K by ascending first centroid coordinate, then by first member
    order = sorted(range(K), key=lambda k: (centroids[k, 0], int(np.argmax(labels == k))))
    remap = np.empty(K, dtype=int)
    remap[order] = np.arange(1, K + 1)
    return ClusterResult(remap[labels], centroids[order], inertia, history=tuple(history))


def inertia_curve(features, k_max: int, restarts: int = 25, seed: int = 42) -> dict[int, float]:
    X = np.asarray(features, dtype=np.float64)
    k_max = min(k_max, X.shape[0])
    return {k: kmeans(X, k, restarts, seed).inertia for k in range(1, k_max + 1)}


def elbow_select(k_curve, override: int | None = None) -> int:
    """K with the largest second difference of the inertia curve (K = 1..Kmax)."""
    if override is not None:
        return int(override)
    if isinstance(k_curve, dict):
        ks = sorted(k_curve)
        if ks != list(range(1, len(ks) + 1)):
            raise CurveTooShort("inertia curve must cover K = 1..Kmax")
        vals = np.array([k_curve[k] for k in ks], dtype=np.float64)
    else:
        vals = np.asarray(k_curve, dtype=np.float64)
    if vals.size < 3:
        raise CurveTooShort("elbow selection needs Kmax >= 3")
    second = vals[:-2] - 2 * vals[1:-1] + vals[2:]
    return int(np.argmax(second)) + 2


# ---------------------------------------------------------------- features


@dataclass(frozen=True)
class ClusterFeatures:
    method: str
    matrix: np.ndarray  # (J, d)
    countries: tuple[str, ...] | None = None
    raw: np.ndarray | None = None  # unscaled method-3 features


def lc_kappas(tensor: MortalityTensor) -> np.ndarray:
    """Single-population Lee-Carter period index per country, ``(J, T)``."""
    return np.stack([fit_lc(log_panel(tensor, j)).kappa_t for j in range(tensor.J)])


def min_max(col: np.ndarray) -> np.ndarray:
    lo, hi = col.min(), col.max()
    if hi == lo:
        return np.zeros_like(col)
    return (col - lo) / (hi - lo)


def build_features(tensor, lc_kappas, method, period: int = WEEKS_PER_YEAR) -> ClusterFeatures:
    """Clustering features for method 1, 2 or 3 (or their names)."""
    K = np.asarray(lc_kappas, dtype=np.float64)
    if K.ndim != 2:
        raise ConfigError("lc_kappas must be a (J, T) array")
    name = METHODS.get(method, method)
    if name not in METHODS.values():
        raise ConfigError(f"unknown clustering method {method!r}")
    countries = tuple(tensor.countries) if tensor is not None else None
    if name == "raw_series":
        return ClusterFeatures(name, K.copy(), countries)
    decomps = [stl(k, period) for k in K]
    slopes = np.array([trend_slope(d) for d in decomps])
    if name == "slope":
        return ClusterFeatures(name, slopes[:, None], countries)
    strength = np.array([seasonal_strength(d) for d in decomps])
    raw = np.column_stack([slopes, strength])
    scaled = np.column_stack([min_max(slopes), min_max(strength)])
    return ClusterFeatures(name, scaled, countries, raw)


def cluster_features(features: ClusterFeatures, K: int | None = None, k_max: int = 8,
                     restarts: int = 25, seed: int = 42) -> ClusterResult:
    """K-means on features, invariant to country order.

    Rows are sorted by country code before clustering. Without ``K`` the
    elbow rule picks it from the inertia curve over 1..k_max.
    """
    X = features.matrix
    J = X.shape[0]
    countries = features.countries or tuple(str(i) for i in range(J))
    order = sorted(range(J), key=lambda i: countries[i])
    Xs = X[order]
    curve = inertia_curve(Xs, min(k_max, J), restarts, seed) if J >= 3 else None
    if K is None:
        if curve is None:
            raise CurveTooShort("need at least 3 countries to select K by the elbow rule")
        K = elbow_select(curve)
    res = kmeans(Xs, K, restarts, seed)
    labels = np.empty(J, dtype=int)
    labels[order] = res.labels
    return ClusterResult(labels, res.centroids, res.inertia, curve, tuple(countries), res.history)


def cluster_countries(tensor: MortalityTensor, method, K: int | None = None, **kw) -> ClusterResult:
    feats = build_features(tensor, lc_kappas(tensor), method)
    return cluster_features(feats, K, **kw)
