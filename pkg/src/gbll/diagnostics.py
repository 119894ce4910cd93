"""Residual diagnostics: sample autocorrelation, Ljung-Box p-values, white-noise counts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from gbll.errors import ConfigError, InsufficientLength, ShapeMismatch, ZeroVariance

NEGLIGIBLE_RESIDUAL = 1e-10


@dataclass(frozen=True)
class LjungBoxConfig:
    lags: int = 10
    alpha: float = 0.05
    fitted_df: int = 0

    def __post_init__(self):
        if int(self.lags) != self.lags or self.lags < 1:
            raise ConfigError(f"Ljung-Box lags must be a positive integer, got {self.lags!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if int(self.fitted_df) != self.fitted_df or self.fitted_df < 0:
            raise ConfigError(f"fitted_df must be a non-negative integer, got {self.fitted_df!r}")
        if self.fitted_df >= self.lags:
            raise ConfigError("fitted_df must be smaller than lags")


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags ``1..max_lag`` (biased, full-sample denominator)."""
    y = np.asarray(series, dtype=np.float64)
    n = y.size
    if y.ndim != 1 or n < 2:
        raise InsufficientLength("autocorrelation needs a 1-D series of length >= 2")
    if not 1 <= max_lag < n:
        raise InsufficientLength(f"max_lag must lie in [1, {n - 1}], got {max_lag}")
    d = y - y.mean()
    denom = np.dot(d, d)
    if denom == 0.0 or not np.isfinite(denom):
        raise ZeroVariance("series has zero variance")
    return np.array([np.dot(d[k:], d[:-k]) for k in range(1, max_lag + 1)]) / denom


def chi2_sf(q: float, df: float) -> float:
    """Upper tail of the chi-squared distribution via the regularized incomplete gamma."""
    if q <= 0:
        return 1.0
    return float(gammaincc(0.5 * df, 0.5 * q))


def ljung_box_stat(series, lags: int) -> float:
    y = np.asarray(series, dtype=np.float64)
    n = y.size
    rho = acf(y, lags)
    k = np.arange(1, lags + 1)
    return float(n * (n + 2) * np.sum(rho * rho / (n - k)))


def ljung_box_p(series, cfg: LjungBoxConfig = LjungBoxConfig()) -> float:
    """Ljung-Box portmanteau p-value for ``series``."""
    n = np.size(series)
    if n <= cfg.lags + cfg.fitted_df:
        raise InsufficientLength(f"series of length {n} too short for {cfg.lags} lags")
    q = ljung_box_stat(series, cfg.lags)
    return chi2_sf(q, cfg.lags - cfg.fitted_df)


def residual_pvalue(series, cfg: LjungBoxConfig) -> float:
    """Ljung-Box p-value with constant (e.g. exactly fitted) series counted as white."""
    try:
        return ljung_box_p(series, cfg)
    except ZeroVariance:
        return 1.0


def residual_pvalues(residuals, cfg: LjungBoxConfig, scale: float | None = None) -> np.ndarray:
    """``(J, N)`` p-values, one per country and age column of ``(J, T, N)`` residuals.

    With ``scale`` given, columns whose standard deviation is at most
    ``NEGLIGIBLE_RESIDUAL * scale`` are rounding noise around an exact fit
    and count as white (p = 1).
    """
    res = np.asarray(residuals, dtype=np.float64)
    if res.ndim == 2:
        res = res[None]
    J, _, N = res.shape
    p = np.array([[residual_pvalue(res[j, :, x], cfg) for x in range(N)] for j in range(J)])
    if scale is not None:
        p[res.std(axis=1) <= NEGLIGIBLE_RESIDUAL * scale] = 1.0
    return p


def negligible_scale(log_rates) -> float:
    """Reference magnitude for the negligible-residual rule: ``max(1, max |Y|)``."""
    return max(1.0, float(np.max(np.abs(log_rates))))


@dataclass(frozen=True)
class WhiteNoiseReport:
    pvalues: np.ndarray  # (J, N)
    counts: np.ndarray  # (N,)
    model_label: str
    alpha: float = 0.05

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rows(self, countries=None, age_groups=None):
        J, N = self.pvalues.shape
        countries = countries or [str(j) for j in range(J)]
        age_groups = age_groups or [str(x) for x in range(N)]
        for j in range(J):
            for x in range(N):
                p = float(self.pvalues[j, x])
                yield {
                    "model": self.model_label,
                    "country": countries[j],
                    "age": age_groups[x],
                    "pvalue": p,
                    "white_noise": p >= self.alpha,
                }


def white_noise_counts(
    residuals, cfg: LjungBoxConfig = LjungBoxConfig(), model_label: str = "", scale: float | None = None
) -> WhiteNoiseReport:
    """Count, per age group, the countries whose residual series pass the Ljung-Box test."""
    try:
        res = np.stack([np.asarray(r, dtype=np.float64) for r in residuals])
    except ValueError as exc:
        raise ShapeMismatch(f"residual panels differ in shape: {exc}") from exc
    p = residual_pvalues(res, cfg, scale)
    counts = (p >= cfg.alpha).sum(axis=0)
    return WhiteNoiseReport(p, counts, model_label, cfg.alpha)
