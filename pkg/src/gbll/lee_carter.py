"""Lee-Carter fit by singular value decomposition of the demeaned log-rate matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gbll.errors import DegenerateLoading, ShapeMismatch

LOADING_TOL = 1e-12


@dataclass(frozen=True)
class LeeCarterFit:
    """Rank-one age/period fit ``a_x + b_x * kappa_t``.

    Attributes
    ----------
    a_x : ndarray, shape (N,)
        Age intercepts (column means of the input).
    b_x : ndarray, shape (N,)
        Age loadings, summing to one.
    kappa_t : ndarray, shape (T,)
        Period index, summing to zero.
    singular_value_share : float
        Share of the demeaned matrix's squared Frobenius norm carried by the
        leading singular value (0 for an all-zero matrix).
    residuals : ndarray, shape (T, N)
        Input minus fitted values.
    """

    a_x: np.ndarray
    b_x: np.ndarray
    kappa_t: np.ndarray
    singular_value_share: float
    residuals: np.ndarray

    def fitted(self) -> np.ndarray:
        return self.a_x[None, :] + np.outer(self.kappa_t, self.b_x)


def fit_lc(Y) -> LeeCarterFit:
    """Fit the Lee-Carter model to a ``T x N`` matrix of log rates.

    An all-zero demeaned matrix (constant columns) has no period effect; it
    yields ``kappa = 0`` and uniform loadings instead of an arbitrary singular
    vector.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ShapeMismatch(f"expected a T x N matrix, got shape {Y.shape}")
    T, N = Y.shape
    if T < 2 or N < 2:
        raise ShapeMismatch(f"need T >= 2 and N >= 2, got {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise ShapeMismatch("input contains non-finite values")

    a = Y.mean(axis=0)
    Yt = Y - a
    if not np.any(Yt):
        b = np.full(N, 1.0 / N)
        kappa = np.zeros(T)
        return LeeCarterFit(a, b, kappa, 0.0, Y - a)

    U, s, Vt = np.linalg.svd(Yt, full_matrices=False)
    u, d, v = U[:, 0], s[0], Vt[0]
    vsum = v.sum()
    if abs(vsum) < LOADING_TOL:
        raise DegenerateLoading(f"sum of leading right singular vector is {vsum:.3e}")
    if vsum < 0:
        u, v, vsum = -u, -v, -vsum
    kappa = d * u * vsum
    b = v / vsum
    # column means of Yt are zero, so kappa already sums to ~0; remove rounding drift
    kappa = kappa - kappa.mean()
    share = float(d * d / np.sum(s * s))
    fit = a[None, :] + np.outer(kappa, b)
    return LeeCarterFit(a, b, kappa, share, Y - fit)
