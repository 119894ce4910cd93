"""Time-index forecasting: annual/biannual Fourier regression plus an ARIMA disturbance.

The ARIMA stage is fitted by conditional sum of squares (pre-sample
innovations set to zero) and selected by AICc over a small (p, d, q) grid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from scipy.signal import lfilter

from gbll.data import WEEKS_PER_YEAR
from gbll.errors import RankDeficient, SeriesTooShort

ROOT_TOL = 1e-6
DEFAULT_GRID = tuple(itertools.product(range(4), (0, 1), range(4)))  # (p, d, q)


def harmonic_design(week_fracs) -> np.ndarray:
    """Columns sin(2πw), cos(2πw), sin(4πw), cos(4πw)."""
    w = np.asarray(week_fracs, dtype=np.float64)
    return np.column_stack(
        [np.sin(2 * np.pi * w), np.cos(2 * np.pi * w), np.sin(4 * np.pi * w), np.cos(4 * np.pi * w)]
    )


def advance_week_fracs(last_week_frac: float, h: int) -> np.ndarray:
    """Week fractions of the ``h`` weeks following ``last_week_frac``, wrapping at year end."""
    pos = int(round(last_week_frac * WEEKS_PER_YEAR))
    return ((pos + np.arange(1, h + 1)) % WEEKS_PER_YEAR) / WEEKS_PER_YEAR


@dataclass(frozen=True)
class HarmonicFit:
    betas: np.ndarray
    tstats: np.ndarray
    pvalues: np.ndarray
    any_significant: bool
    intercept: float = 0.0
    alpha: float = 0.05

    def evaluate(self, week_fracs) -> np.ndarray:
        return harmonic_design(week_fracs) @ self.betas


def fit_harmonics(kappa, week_fracs, alpha: float = 0.05) -> tuple[HarmonicFit, np.ndarray]:
    """OLS of ``kappa`` on an intercept and four Fourier terms.

    Returns the fit and the residual left for the ARIMA stage. The OLS
    intercept is not removed from the residual; the ARIMA mean carries the
    level. When no Fourier coefficient is significant, the betas are zeroed
    and the residual is ``kappa`` itself.
    """
    y = np.asarray(kappa, dtype=np.float64)
    w = np.asarray(week_fracs, dtype=np.float64)
    T = y.size
    if w.shape != y.shape:
        raise ValueError("kappa and week_fracs must have the same length")
    if T < 12:
        raise SeriesTooShort(f"harmonic regression needs at least 12 points, got {T}")
    if np.unique(np.round(w * WEEKS_PER_YEAR)).size < 5:
        raise RankDeficient("fewer than 5 distinct week fractions")
    X = np.column_stack([np.ones(T), harmonic_design(w)])
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < 5:
        raise RankDeficient("harmonic design matrix is rank deficient")
    resid = y - X @ coef
    dof = T - 5
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))[1:]
    b = coef[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, b / np.where(se > 0, se, 1.0), np.where(b != 0, np.inf * np.sign(b), 0.0))
    pvals = 2 * stats.t.sf(np.abs(t), dof)
    significant = pvals < alpha
    if not significant.any():
        fit = HarmonicFit(np.zeros(4), t, pvals, False, float(coef[0]), alpha)
        return fit, y.copy()
    fit = HarmonicFit(b.copy(), t, pvals, True, float(coef[0]), alpha)
    return fit, y - harmonic_design(w) @ b


@dataclass(frozen=True)
class ArimaFit:
    """Conditional-sum-of-squares ARIMA fit on the differenced series.

    ``intercept`` is the mean of the (differenced) series, so it is the drift
    when ``d = 1``. ``const`` is the equivalent regression constant
    ``intercept * (1 - sum(ar))``.
    """

    order: tuple[int, int, int]
    ar: np.ndarray
    ma: np.ndarray
    intercept: float
    sigma2: float
    loglik_proxy: float  # conditional sum of squares
    aicc: float
    const: float = 0.0
    start_css: float = math.inf
    tail_z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tail_e: np.ndarray = field(default_factory=lambda: np.zeros(0))
    last_level: float = 0.0


def _ar_poly_ok(coefs, sign: float) -> bool:
    """Roots of 1 + sign*(c1 z + ... ) lie outside the unit circle."""
    coefs = np.asarray(coefs, dtype=np.float64)
    if coefs.size == 0:
        return True
    if not np.all(np.isfinite(coefs)):
        return False
    poly = np.concatenate([[1.0], sign * coefs])[::-1]  # highest degree first
    while poly.size > 1 and poly[0] == 0:
        poly = poly[1:]
    if poly.size <= 1:
        return True
    roots = np.roots(poly)
    return bool(np.all(np.abs(roots) > 1 + ROOT_TOL))


def is_stationary(ar) -> bool:
    return _ar_poly_ok(ar, -1.0)


def is_invertible(ma) -> bool:
    return _ar_poly_ok(ma, 1.0)


def css_residuals(z: np.ndarray, const: float, ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
    """Innovations ``e_t`` for ``t >= p`` with pre-sample innovations zero."""
    p = ar.size
    v = z[p:] - const
    for i in range(p):
        v = v - ar[i] * z[p - 1 - i : z.size - 1 - i]
    if ma.size:
        v = lfilter([1.0], np.concatenate([[1.0], ma]), v)
    return v


def _css(params, z, p, q, skip=0):
    with np.errstate(over="ignore", invalid="ignore"):
        e = css_residuals(z, params[0], params[1 : 1 + p], params[1 + p : 1 + p + q])[skip:]
        val = float(e @ e)
    return val if np.isfinite(val) else 1e300


def _css_and_grad(params, z, p, q, skip=0):
    """CSS and its exact gradient; derivatives pass through the same MA filter."""
    ar, ma = params[1 : 1 + p], params[1 + p : 1 + p + q]
    with np.errstate(over="ignore", invalid="ignore"):
        e = css_residuals(z, params[0], ar, ma)
        val = float(e[skip:] @ e[skip:])
        if not np.isfinite(val):
            return 1e300, np.zeros_like(params)
        m = e.size
        a = np.concatenate([[1.0], ma])
        dv = [-np.ones(m)] + [-z[p - 1 - i : z.size - 1 - i] for i in range(p)]
        for j in range(q):
            lagged = np.zeros(m)
            lagged[j + 1 :] = e[: m - 1 - j]
            dv.append(-lagged)
        de = lfilter([1.0], a, np.array(dv), axis=1) if q else np.array(dv)
        grad = 2.0 * de[:, skip:] @ e[skip:]
    if not np.all(np.isfinite(grad)):
        return 1e300, np.zeros_like(params)
    return val, grad


def _ols(X, y):
    return np.linalg.lstsq(X, y, rcond=None)[0]


def hannan_rissanen(z: np.ndarray, p: int, q: int) -> np.ndarray:
    """Starting values ``[const, ar..., ma...]``."""
    n = z.size
    mean = float(z.mean())
    if p == 0 and q == 0:
        return np.array([mean])
    w = z - mean
    if q > 0:
        m = int(min(max(2 * (p + q), 8, round(math.log(n) ** 2)), n // 4))
        Xl = np.column_stack([w[m - 1 - i : n - 1 - i] for i in range(m)])
        phi_long = _ols(Xl, w[m:])
        ehat = np.zeros(n)
        ehat[m:] = w[m:] - Xl @ phi_long
        start = m + q
    else:
        ehat = np.zeros(n)
        start = p
    cols = [w[start - 1 - i : n - 1 - i] for i in range(p)] + [ehat[start - 1 - j : n - 1 - j] for j in range(q)]
    coef = _ols(np.column_stack(cols), w[start:])
    ar, ma = coef[:p], coef[p:]
    shrink = 1.0
    while not (is_stationary(ar * shrink) and is_invertible(ma * shrink)) and shrink > 1e-3:
        shrink *= 0.5
    if shrink <= 1e-3:
        ar, ma, shrink = np.zeros(p), np.zeros(q), 1.0
    ar, ma = ar * shrink, ma * shrink
    return np.concatenate([[mean * (1 - ar.sum())], ar, ma])


def aicc(css: float, n: int, k: int) -> float:
    if n - k - 1 <= 0 or css <= 0:
        return math.inf if css > 0 else -math.inf
    return n * math.log(css / n) + 2 * k * n / (n - k - 1)


def _fit_order(x: np.ndarray, p: int, d: int, q: int, n_cond: int | None = None) -> ArimaFit | None:
    """Fit one order; the CSS sums innovations at original indices ``>= n_cond``.

    A common ``n_cond`` across candidates keeps their AICc values comparable.
    """
    z = np.diff(x, n=d) if d else x
    if n_cond is None:
        n_cond = p + d
    skip = n_cond - p - d
    if skip < 0:
        raise ValueError("n_cond must be at least p + d")
    n_eff = x.size - n_cond
    k = p + q + 2
    if n_eff - k - 1 <= 0:
        return None
    start = hannan_rissanen(z, p, q)
    start_css = _css(start, z, p, q, skip)
    best = start
    if p + q > 0:
        res = optimize.minimize(
            _css_and_grad, start, args=(z, p, q, skip), jac=True, method="BFGS", options={"gtol": 1e-8, "maxiter": 500}
        )
        cand = res.x
        if (
            np.all(np.isfinite(cand))
            and _css(cand, z, p, q, skip) <= start_css
            and is_stationary(cand[1 : 1 + p])
            and is_invertible(cand[1 + p :])
        ):
            best = cand
    const, ar, ma = float(best[0]), best[1 : 1 + p].copy(), best[1 + p :].copy()
    if not (is_stationary(ar) and is_invertible(ma)):
        return None
    e = css_residuals(z, const, ar, ma)
    css = float(e[skip:] @ e[skip:])
    mean = const / (1 - ar.sum()) if p else const
    return ArimaFit(
        order=(p, d, q),
        ar=ar,
        ma=ma,
        intercept=float(mean),
        sigma2=css / n_eff,
        loglik_proxy=css,
        aicc=aicc(css, n_eff, k),
        const=const,
        start_css=start_css,
        tail_z=z[z.size - p :].copy() if p else np.zeros(0),
        tail_e=e[e.size - q :].copy() if q else np.zeros(0),
        last_level=float(x[-1]),
    )


def fit_arima(residual, grid=DEFAULT_GRID) -> ArimaFit:
    """AICc-selected ARIMA over ``grid`` of ``(p, d, q)`` orders."""
    x = np.asarray(residual, dtype=np.float64)
    if x.ndim != 1 or x.size < 20:
        raise SeriesTooShort(f"ARIMA fitting needs at least 20 points, got {x.size}")
    grid = sorted(grid)
    n_cond = max(p + d for p, d, _ in grid)
    best: ArimaFit | None = None
    for p, d, q in grid:
        fit = _fit_order(x, p, d, q, n_cond)
        if fit is None:
            continue
        if best is None or fit.aicc < best.aicc:
            best = fit
    if best is None:
        best = _fit_order(x, 0, 1, 0)
    return best


def forecast_arima(fit: ArimaFit, h: int) -> np.ndarray:
    """Point forecasts ``1..h`` of the undifferenced series."""
    p, d, q = fit.order
    z_hist = list(fit.tail_z)
    e_hist = list(fit.tail_e)
    out = np.empty(h)
    for u in range(h):
        val = fit.const
        for i in range(p):
            val += fit.ar[i] * z_hist[-1 - i]
        for j in range(q):
            if j < len(e_hist):
                val += fit.ma[j] * e_hist[-1 - j]
        out[u] = val
        if p:
            z_hist.append(val)
        if q:
            e_hist.append(0.0)
    if d == 1:
        out = fit.last_level + np.cumsum(out)
    return out


def forecast_kappa(h: int, harm: HarmonicFit, arima: ArimaFit, last_week_frac: float) -> np.ndarray:
    """``h``-step forecast: harmonic part at future week fractions plus the ARIMA forecast."""
    if h < 1:
        raise ValueError("h must be >= 1")
    return harm.evaluate(advance_week_fracs(last_week_frac, h)) + forecast_arima(arima, h)


def forecast_series(kappa, week_fracs, h: int, grid=DEFAULT_GRID, alpha: float = 0.05) -> np.ndarray:
    """Fit harmonics + ARIMA to one time index and forecast ``h`` steps."""
    harm, resid = fit_harmonics(kappa, week_fracs, alpha)
    arima = fit_arima(resid, grid)
    return forecast_kappa(h, harm, arima, float(np.asarray(week_fracs)[-1]))
