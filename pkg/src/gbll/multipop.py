"""Multi-population fits on the product/ratio split of log rates.

Both models share one decomposition: the product term is the geometric mean
of rates across countries, the ratio term each country's deviation from it.
The Li-Lee model fits a rank-one Lee-Carter model to each; the HBY-style
baseline keeps several principal components of each.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from gbll.errors import DegenerateLoading, PathLengthMismatch, ShapeMismatch
from gbll.lee_carter import LeeCarterFit, fit_lc


def as_panel_stack(panels) -> np.ndarray:
    """Validate per-country ``T x N`` panels and stack them as ``(J, T, N)``."""
    if isinstance(panels, np.ndarray):
        stack = np.asarray(panels, dtype=np.float64)
        if stack.ndim == 2:
            stack = stack[None]
    else:
        shapes = {np.shape(p) for p in panels}
        if len(shapes) != 1:
            raise ShapeMismatch(f"panels differ in shape: {sorted(shapes)}")
        stack = np.stack([np.asarray(p, dtype=np.float64) for p in panels])
    if stack.ndim != 3 or stack.shape[0] < 1:
        raise ShapeMismatch(f"expected J >= 1 panels of shape T x N, got {stack.shape}")
    if not np.all(np.isfinite(stack)):
        raise ShapeMismatch("panels contain non-finite values")
    return stack


def product_ratio(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split ``(J, T, N)`` log rates into log product ``(T, N)`` and log ratios ``(J, T, N)``."""
    log_p = stack.mean(axis=0)
    return log_p, stack - log_p


@dataclass(frozen=True)
class KappaPaths:
    """Time-index values, in-sample or forecast.

    ``common`` has shape ``(R, H)``; ``country`` has shape ``(J, U, H)``.
    Li-Lee fits use ``R = U = 1``.
    """

    common: np.ndarray
    country: np.ndarray

    @property
    def horizon(self) -> int:
        return self.common.shape[-1]


@dataclass(frozen=True)
class LiLeeFit:
    product_fit: LeeCarterFit
    ratio_fits: tuple[LeeCarterFit, ...]
    A_x: np.ndarray  # (J, N)
    residuals: np.ndarray  # (J, T, N)

    @property
    def J(self) -> int:
        return len(self.ratio_fits)

    def fitted(self) -> np.ndarray:
        bp, kp = self.product_fit.b_x, self.product_fit.kappa_t
        common = np.outer(kp, bp)
        return np.stack(
            [self.A_x[j][None, :] + common + np.outer(rf.kappa_t, rf.b_x) for j, rf in enumerate(self.ratio_fits)]
        )

    def time_indices(self) -> KappaPaths:
        return KappaPaths(
            self.product_fit.kappa_t[None, :].copy(),
            np.stack([rf.kappa_t for rf in self.ratio_fits])[:, None, :],
        )


@dataclass(frozen=True)
class HbyFit:
    mu: np.ndarray  # (J, N)
    phi: np.ndarray  # (R, N), orthonormal rows
    beta: np.ndarray  # (T, R)
    psi: np.ndarray  # (J, U, N), orthonormal rows per country
    gamma: np.ndarray  # (J, T, U)
    order: tuple[int, int]
    requested_order: tuple[int, int]
    residuals: np.ndarray  # (J, T, N)

    @property
    def J(self) -> int:
        return self.mu.shape[0]

    def fitted(self) -> np.ndarray:
        common = self.beta @ self.phi
        return np.stack([self.mu[j] + common + self.gamma[j] @ self.psi[j] for j in range(self.J)])

    def time_indices(self) -> KappaPaths:
        return KappaPaths(self.beta.T.copy(), self.gamma.transpose(0, 2, 1).copy())


def fit_li_lee(panels) -> LiLeeFit:
    """Product-ratio estimate of the Li-Lee augmented common factor model."""
    stack = as_panel_stack(panels)
    log_p, log_r = product_ratio(stack)
    try:
        product_fit = fit_lc(log_p)
    except DegenerateLoading as exc:
        raise DegenerateLoading(f"product fit: {exc}") from exc
    ratio_fits = []
    for j in range(stack.shape[0]):
        try:
            ratio_fits.append(fit_lc(log_r[j]))
        except DegenerateLoading as exc:
            raise DegenerateLoading(f"ratio fit for country {j}: {exc}") from exc
    A = np.stack([product_fit.a_x + rf.a_x for rf in ratio_fits])
    common = np.outer(product_fit.kappa_t, product_fit.b_x)
    fitted = np.stack([A[j][None, :] + common + np.outer(rf.kappa_t, rf.b_x) for j, rf in enumerate(ratio_fits)])
    return LiLeeFit(product_fit, tuple(ratio_fits), A, stack - fitted)


def _principal_components(M: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k scores ``(T, k)`` and orthonormal loadings ``(k, N)`` of a centred matrix."""
    if k == 0:
        return np.zeros((M.shape[0], 0)), np.zeros((0, M.shape[1]))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    U, s, Vt = U[:, :k], s[:k], Vt[:k]
    # fix the SVD sign: largest-magnitude loading entry positive
    flip = np.sign(Vt[np.arange(k), np.argmax(np.abs(Vt), axis=1)])
    flip[flip == 0] = 1.0
    return U * s * flip, Vt * flip[:, None]


def fit_hby(panels, order=(6, 6)) -> HbyFit:
    """Discrete product-ratio principal-component model of a given order.

    ``order`` is ``(R, U)``: common components from the log product matrix and
    country components from each log ratio matrix. Orders above the number of
    age groups are truncated with a warning.
    """
    stack = as_panel_stack(panels)
    J, T, N = stack.shape
    R_req, U_req = (int(order), int(order)) if np.isscalar(order) else (int(order[0]), int(order[1]))
    if R_req < 0 or U_req < 0:
        raise ValueError("HBY order must be non-negative")
    cap = min(N, T)
    R, U = min(R_req, cap), min(U_req, cap)
    if (R, U) != (R_req, U_req):
        warnings.warn(
            f"HBY order ({R_req}, {U_req}) truncated to ({R}, {U}); order truncated to {cap}",
            UserWarning,
            stacklevel=2,
        )
    log_p, log_r = product_ratio(stack)
    p_mean = log_p.mean(axis=0)
    beta, phi = _principal_components(log_p - p_mean, R)
    mu = np.empty((J, N))
    psi = np.empty((J, U, N))
    gamma = np.empty((J, T, U))
    for j in range(J):
        r_mean = log_r[j].mean(axis=0)
        mu[j] = p_mean + r_mean
        gamma[j], psi[j] = _principal_components(log_r[j] - r_mean, U)
    common = beta @ phi
    fitted = np.stack([mu[j] + common + gamma[j] @ psi[j] for j in range(J)])
    return HbyFit(mu, phi, beta, psi, gamma, (R, U), (R_req, U_req), stack - fitted)


def predict(fit: LiLeeFit | HbyFit, kappa_paths: KappaPaths) -> np.ndarray:
    """Log-rate reconstruction ``(J, H, N)`` from forecast time-index paths."""
    common = np.atleast_2d(np.asarray(kappa_paths.common, dtype=np.float64))
    country = np.asarray(kappa_paths.country, dtype=np.float64)
    if country.ndim == 2:
        country = country[:, None, :]
    H = common.shape[-1]
    if country.shape[-1] != H:
        raise PathLengthMismatch(f"common paths have length {H}, country paths {country.shape[-1]}")
    if country.shape[0] != fit.J:
        raise PathLengthMismatch(f"expected {fit.J} country path sets, got {country.shape[0]}")
    if isinstance(fit, LiLeeFit):
        if common.shape[0] != 1 or country.shape[1] != 1:
            raise PathLengthMismatch("Li-Lee fits take exactly one common and one path per country")
        pf = fit.product_fit
        base = np.outer(common[0], pf.b_x)
        return np.stack(
            [fit.A_x[j] + base + np.outer(country[j, 0], rf.b_x) for j, rf in enumerate(fit.ratio_fits)]
        )
    R, U = fit.order
    if common.shape[0] != R or country.shape[1] != U:
        raise PathLengthMismatch(f"expected {R} common and {U} country paths, got {common.shape[0]} and {country.shape[1]}")
    base = common.T @ fit.phi
    return np.stack([fit.mu[j] + base + country[j].T @ fit.psi[j] for j in range(fit.J)])
