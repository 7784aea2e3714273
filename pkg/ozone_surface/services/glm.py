"""
Poisson quasi-likelihood GLM fitted by iteratively reweighted least squares.

Each weighted least-squares step is solved with a column-pivoted QR of
sqrt(W) X, so aliased columns are detected and reported rather than dropped.
"""

import logging
from typing import Literal, Optional, Sequence

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import xlogy

from ..core.exceptions import (
    FittingError,
    GlmConvergenceError,
    InsufficientDataError,
    RankDeficiencyError,
)
from ..schemas.types import NDArray

logger = logging.getLogger(__name__)

GlmFamily = Literal["quasipoisson", "poisson"]

_MAX_HALVINGS = 10
_MAX_ETA = 700.0


class GlmFit(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coefficients: NDArray
    covariance: NDArray
    unscaled_covariance: NDArray
    dispersion: float = Field(..., gt=0)
    converged: bool
    iterations: int
    deviance: float
    fitted: NDArray
    column_labels: list[str] = Field(default_factory=list)
    family: GlmFamily = "quasipoisson"

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


def find_aliased_columns(
    X: np.ndarray, column_labels: Optional[Sequence[str]] = None, rtol: float = 1e-10
) -> list[str]:
    """Labels of the columns a pivoted QR places beyond the numerical rank of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    labels = list(column_labels) if column_labels is not None else [f"x{i}" for i in range(X.shape[1])]
    if X.shape[1] == 0:
        return []
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        return [labels[i] for i in piv]
    rank = int(np.sum(diag > rtol * diag[0] * max(X.shape)))
    return [labels[i] for i in sorted(piv[rank:])]


def _deviance(y: np.ndarray, mu: np.ndarray) -> float:
    return float(2.0 * np.sum(xlogy(y, y / mu) - (y - mu)))


def _weighted_qr(X: np.ndarray, w: np.ndarray):
    return scipy.linalg.qr(np.sqrt(w)[:, None] * X, mode="economic", pivoting=True)


def _wls_step(X: np.ndarray, z: np.ndarray, w: np.ndarray) -> np.ndarray:
    Q, R, piv = _weighted_qr(X, w)
    solution = scipy.linalg.solve_triangular(R, Q.T @ (np.sqrt(w) * z))
    beta = np.empty(X.shape[1])
    beta[piv] = solution
    return beta


def _inverse_information(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(X^T W X)^-1 from the R factor of sqrt(W) X, undoing the column pivoting."""
    _, R, piv = _weighted_qr(X, w)
    R_inv = scipy.linalg.solve_triangular(R, np.eye(R.shape[0]))
    cov = np.empty((X.shape[1], X.shape[1]))
    cov[np.ix_(piv, piv)] = R_inv @ R_inv.T
    return 0.5 * (cov + cov.T)


def _mean(eta: np.ndarray) -> np.ndarray:
    return np.exp(np.minimum(eta, _MAX_ETA))


def fit_poisson_quasi(
    y: np.ndarray,
    X: np.ndarray,
    offset: Optional[np.ndarray] = None,
    tol: float = 1e-8,
    max_iter: int = 50,
    family: GlmFamily = "quasipoisson",
    column_labels: Optional[Sequence[str]] = None,
    city_id: Optional[str] = None,
) -> GlmFit:
    """
    Log-link Poisson regression with offset. The covariance is the inverse
    Fisher information scaled by the Pearson dispersion chi2 / (n - p); with
    ``family="poisson"`` the dispersion is fixed at 1.
    """
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=np.float64)
    labels = list(column_labels) if column_labels is not None else [f"x{i}" for i in range(p)]
    tag = f"[city {city_id}] " if city_id else ""

    if y.shape != (n,) or offset.shape != (n,):
        raise FittingError(city_id, "response, design and offset lengths differ")
    if len(labels) != p:
        raise FittingError(city_id, "column_labels does not match the design width")
    if n <= p:
        raise InsufficientDataError(city_id, f"{n} observations for {p} coefficients")
    if not np.all(np.isfinite(y)) or np.any(y < 0):
        raise FittingError(city_id, "counts must be finite and nonnegative")
    if not np.any(y > 0):
        raise FittingError(city_id, "all-zero response")
    aliased = find_aliased_columns(X, labels)
    if aliased:
        raise RankDeficiencyError(aliased, city_id)

    mu = y + 0.1
    eta = np.log(mu)
    beta: Optional[np.ndarray] = None
    deviance = _deviance(y, mu)
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        z = eta - offset + (y - mu) / mu
        candidate = _wls_step(X, z, mu)
        eta_new = offset + X @ candidate
        mu_new = _mean(eta_new)
        dev_new = _deviance(y, mu_new)
        halvings = 0
        while beta is not None and halvings < _MAX_HALVINGS and (not np.isfinite(dev_new) or dev_new > deviance):
            candidate = 0.5 * (candidate + beta)
            eta_new = offset + X @ candidate
            mu_new = _mean(eta_new)
            dev_new = _deviance(y, mu_new)
            halvings += 1
        if halvings:
            logger.debug(f"{tag}IRLS iteration {iteration}: {halvings} step halvings")
        change = abs(dev_new - deviance) / (abs(dev_new) + 0.1)
        beta, eta, mu, deviance = candidate, eta_new, mu_new, dev_new
        logger.debug(f"{tag}IRLS iteration {iteration}: deviance {deviance:.8g}")
        if change < tol:
            converged = True
            break

    unscaled = _inverse_information(X, mu)
    if family == "poisson":
        dispersion = 1.0
    else:
        dispersion = float(np.sum((y - mu) ** 2 / mu) / (n - p))
        dispersion = max(dispersion, np.finfo(float).tiny)
    fit = GlmFit(
        coefficients=beta,
        covariance=dispersion * unscaled,
        unscaled_covariance=unscaled,
        dispersion=dispersion,
        converged=converged,
        iterations=iteration,
        deviance=deviance,
        fitted=mu,
        column_labels=labels,
        family=family,
    )
    if not converged:
        raise GlmConvergenceError(last_fit=fit, city_id=city_id)
    logger.debug(f"{tag}IRLS converged in {iteration} iterations, dispersion {dispersion:.4g}")
    return fit


def partition_covariance(fit: GlmFit, n_beta: int):
    """
    Split the covariance into (V11, V12, V21, V22) with the surface
    coefficients in the leading ``n_beta`` block. V21 is V12 transposed.
    """
    cov = fit.covariance
    total = cov.shape[0]
    if n_beta < 0 or n_beta > total:
        raise ValueError(f"n_beta={n_beta} does not fit a covariance of size {total}")
    v11 = cov[:n_beta, :n_beta].copy()
    v12 = cov[:n_beta, n_beta:].copy()
    v22 = cov[n_beta:, n_beta:].copy()
    return v11, v12, v12.T, v22
