"""Stationary AR(1) error covariance and its O(n) precision operations.

The covariance of the error vector is sigma^2 * Psi with
Psi[i, j] = phi^|i-j| / (1 - phi^2). Its inverse is tridiagonal, which gives
O(n) matrix-vector products and a closed-form log-determinant:
det(Psi) = 1 / (1 - phi^2) for every n >= 1.
"""

from __future__ import annotations

import math

import numpy as np


def _check(phi: float, sigma: float) -> None:
    if not abs(phi) < 1:
        raise ValueError(f"|phi| must be < 1, got {phi}")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")


def ar1_covariance(phi: float, sigma: float, n: int, compat: bool = False) -> np.ndarray:
    """Dense n x n AR(1) error covariance.

    Default form: sigma^2 * phi^|i-j| / (1 - phi^2). With ``compat=True``
    produces the alternative sigma^2 * (1 - phi^2) * phi^|i-j| scaling
    instead (a legacy parameterization kept for cross-checking).
    """
    _check(phi, sigma)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    lags = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    corr = phi ** lags
    if compat:
        return sigma**2 * (1 - phi**2) * corr
    return sigma**2 * corr / (1 - phi**2)


def ar1_precision_apply(phi: float, sigma: float, v: np.ndarray) -> np.ndarray:
    """Compute (sigma^2 * Psi)^-1 v in O(n) via the tridiagonal precision."""
    _check(phi, sigma)
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    if n == 0:
        return v.copy()
    if n == 1:
        return v * (1 - phi**2) / sigma**2
    out = np.empty_like(v)
    out[0] = v[0] - phi * v[1]
    out[-1] = v[-1] - phi * v[-2]
    if n > 2:
        out[1:-1] = (1 + phi**2) * v[1:-1] - phi * (v[:-2] + v[2:])
    return out / sigma**2


def ar1_quadratic_form(phi: float, sigma: float, r: np.ndarray) -> float:
    """r^T (sigma^2 Psi)^-1 r, in O(n)."""
    _check(phi, sigma)
    r = np.asarray(r, dtype=float)
    n = r.shape[0]
    if n == 0:
        return 0.0
    if n == 1:
        return float(r[0] ** 2 * (1 - phi**2) / sigma**2)
    s_all = float(r @ r)
    s_mid = float(r[1:-1] @ r[1:-1])
    s_lag = float(r[:-1] @ r[1:])
    return (s_all + phi**2 * s_mid - 2 * phi * s_lag) / sigma**2


def ar1_log_det(phi: float, sigma: float, n: int) -> float:
    """log det(sigma^2 * Psi) in closed form."""
    _check(phi, sigma)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return 2 * n * math.log(sigma) - math.log1p(-phi**2)


def ar1_weighted_cross(phi: float, sigma: float, X: np.ndarray, y: np.ndarray):
    """X^T Omega X and X^T Omega y with Omega = (sigma^2 Psi)^-1, in O(n p^2)."""
    _check(phi, sigma)
    n = X.shape[0]
    if n == 0:
        p = X.shape[1]
        return np.zeros((p, p)), np.zeros(p)
    if n == 1:
        w = (1 - phi**2) / sigma**2
        return w * (X.T @ X), w * (X.T @ y)
    XtX = X.T @ X
    Xm = X[1:-1]
    XtX_mid = Xm.T @ Xm
    cross = X[:-1].T @ X[1:]
    M = XtX + phi**2 * XtX_mid - phi * (cross + cross.T)
    v = (
        X.T @ y
        + phi**2 * (Xm.T @ y[1:-1])
        - phi * (X[:-1].T @ y[1:] + X[1:].T @ y[:-1])
    )
    return M / sigma**2, v / sigma**2
