"""Gradient boosting with Li-Lee fits as the weak learner.

Each stage fits the Li-Lee model to the current residual panels, scales the
stage by the closed-form minimiser of the pooled Frobenius loss and
subtracts it. Boosting stops as soon as every (country, age) residual series
passes the Ljung-Box test, or after ``max_iterations`` stages.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from gbll.diagnostics import LjungBoxConfig, negligible_scale, residual_pvalues
from gbll.errors import NumericError, ZeroPredictor
from gbll.multipop import LiLeeFit, as_panel_stack, fit_li_lee

log = logging.getLogger(__name__)

ALL_WHITE_NOISE = "all_white_noise"
MAX_ITERATIONS = "max_iterations"

# residual columns this small relative to the data are rounding noise, not signal


@dataclass(frozen=True)
class GbllEnsemble:
    stages: tuple[LiLeeFit, ...]
    gammas: np.ndarray
    iterations_used: int
    stop_reason: str
    per_stage_loss: np.ndarray
    max_iterations: int
    residuals: np.ndarray | None = None  # (J, T, N), E_l
    min_pvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def J(self) -> int:
        return self.stages[0].J


def line_search_gamma(E, Yhat) -> float:
    """Minimiser of ``sum_j ||E_j - gamma * Yhat_j||_F^2``."""
    E = np.asarray(E, dtype=np.float64)
    Yhat = np.asarray(Yhat, dtype=np.float64)
    if E.shape != Yhat.shape:
        raise ValueError(f"shape mismatch {E.shape} vs {Yhat.shape}")
    denom = float(np.sum(Yhat * Yhat))
    if denom <= 1e-300:
        raise ZeroPredictor("stage prediction is identically zero")
    return float(np.sum(E * Yhat)) / denom


def stage_pvalues(residuals: np.ndarray, cfg: LjungBoxConfig, scale: float) -> np.ndarray:
    return residual_pvalues(residuals, cfg, scale)


def fit_gbll(
    panels,
    G: int = 50,
    lb_config: LjungBoxConfig = LjungBoxConfig(),
    gamma_cap: float | None = None,
) -> GbllEnsemble:
    """Boost Li-Lee fits on ``(J, T, N)`` log-rate panels."""
    if G < 1:
        raise ValueError("G must be at least 1")
    Y = as_panel_stack(panels)
    scale = negligible_scale(Y)

    stages: list[LiLeeFit] = []
    gammas: list[float] = []
    losses: list[float] = []
    min_ps: list[float] = []
    E = Y
    g = 0
    while True:
        try:
            fit = fit_li_lee(E)
            Yhat = fit.fitted()
            gamma = line_search_gamma(E, Yhat)
        except NumericError as exc:
            raise type(exc)(f"stage {g + 1}: {exc}") from exc
        if gamma_cap is not None:
            gamma = float(np.clip(gamma, -gamma_cap, gamma_cap))
        E = E - gamma * Yhat
        g += 1
        stages.append(fit)
        gammas.append(gamma)
        losses.append(float(np.sum(E * E)))
        p = stage_pvalues(E, lb_config, scale)
        min_ps.append(float(p.min()))
        log.info("stage %d: gamma=%.6g loss=%.6g min_p=%.4f", g, gamma, losses[-1], min_ps[-1])
        if min_ps[-1] >= lb_config.alpha:
            reason = ALL_WHITE_NOISE
            break
        if g >= G:
            reason = MAX_ITERATIONS
            break

    return GbllEnsemble(
        stages=tuple(stages),
        gammas=np.array(gammas),
        iterations_used=g,
        stop_reason=reason,
        per_stage_loss=np.array(losses),
        max_iterations=G,
        residuals=E,
        min_pvalues=np.array(min_ps),
    )


def ensemble_fitted(ens: GbllEnsemble) -> np.ndarray:
    """In-sample fitted log rates ``(J, T, N)``: the gamma-weighted sum of stage fits."""
    if not ens.stages:
        raise ValueError("empty ensemble")
    total = ens.gammas[0] * ens.stages[0].fitted()
    for gamma, stage in zip(ens.gammas[1:], ens.stages[1:]):
        total = total + gamma * stage.fitted()
    return total
