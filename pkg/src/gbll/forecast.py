"""Forecast fitted models by projecting each time index independently."""

from __future__ import annotations

import numpy as np

from gbll.boost import GbllEnsemble
from gbll.multipop import HbyFit, KappaPaths, LiLeeFit, predict
from gbll.tsmodels import DEFAULT_GRID, forecast_series


def forecast_index(series, week_fracs, h: int, grid=DEFAULT_GRID, alpha: float = 0.05) -> np.ndarray:
    series = np.asarray(series, dtype=np.float64)
    if np.ptp(series) == 0.0:
        return np.full(h, series[-1])
    return forecast_series(series, week_fracs, h, grid, alpha)


def forecast_paths(
    paths: KappaPaths, week_fracs, h: int, grid=DEFAULT_GRID, alpha: float = 0.05, freeze: bool = False
) -> KappaPaths:
    """Project every in-sample index in ``paths`` ``h`` steps ahead.

    With ``freeze`` every index is held at its last in-sample value.
    """
    if freeze:
        return KappaPaths(
            np.repeat(paths.common[..., -1:], h, axis=-1),
            np.repeat(paths.country[..., -1:], h, axis=-1),
        )
    common = np.array([forecast_index(k, week_fracs, h, grid, alpha) for k in paths.common]).reshape(-1, h)
    J, U, _ = paths.country.shape
    country = np.empty((J, U, h))
    for j in range(J):
        for u in range(U):
            country[j, u] = forecast_index(paths.country[j, u], week_fracs, h, grid, alpha)
    return KappaPaths(common, country)


def forecast_fit(fit: LiLeeFit | HbyFit, week_fracs, h: int, grid=DEFAULT_GRID, freeze: bool = False) -> np.ndarray:
    """``(J, h, N)`` log-rate forecasts from a single Li-Lee or HBY fit."""
    return predict(fit, forecast_paths(fit.time_indices(), week_fracs, h, grid, freeze=freeze))


def forecast_ensemble(ens: GbllEnsemble, week_fracs, h: int, grid=DEFAULT_GRID, freeze: bool = False) -> np.ndarray:
    """Sum over stages of ``gamma_g`` times the stage's forecast."""
    total = None
    for gamma, stage in zip(ens.gammas, ens.stages):
        part = gamma * forecast_fit(stage, week_fracs, h, grid, freeze)
        total = part if total is None else total + part
    return total
