"""
Second-stage likelihood. After integrating gamma out under its flat prior,
beta_hat_c | theta_c ~ N(A_c theta_c, V11_c), with A_c the least-squares
projection of the global surface onto the city's local basis.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from ...core.exceptions import NotPositiveDefiniteError, RankDeficiencyError
from ...models.stage1 import Stage1Fit
from ...schemas.pydantic.surface import BernsteinBasis1D
from ..basis import inverse_transform_matrix, tensor_design

logger = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))


def projection_matrix(
    fit: Stage1Fit,
    bases: tuple[BernsteinBasis1D, BernsteinBasis1D],
    t_inv: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    A_c = (b_c^T b_c)^-1 b_c^T B(X_c) T^-1, solved through a pivoted QR of the
    local design b_c.
    """
    ozone_basis, temp_basis = bases
    if t_inv is None:
        t_inv = inverse_transform_matrix(ozone_basis.order, temp_basis.order)
    local = tensor_design(fit.local_ozone_basis, fit.local_temp_basis, fit.ozone_obs, fit.temp_obs)
    global_design = tensor_design(ozone_basis, temp_basis, fit.ozone_obs, fit.temp_obs) @ t_inv
    Q, R, piv = scipy.linalg.qr(local, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * diag[0] * max(local.shape)))
    if rank < local.shape[1]:
        raise RankDeficiencyError(
            [f"beta_{i % fit.local_ozone_basis.size}_{i // fit.local_ozone_basis.size}" for i in sorted(piv[rank:])],
            city_id=fit.city_id,
        )
    solution = scipy.linalg.solve_triangular(R, Q.T @ global_design)
    A = np.empty_like(solution)
    A[piv] = solution
    return A


def nearest_pd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric eigenvalue floor at 1e-10 * trace / dim."""
    sym = 0.5 * (matrix + matrix.T)
    values, vectors = np.linalg.eigh(sym)
    floor = 1e-10 * max(float(np.trace(sym)), np.finfo(float).tiny) / sym.shape[0]
    repaired = (vectors * np.maximum(values, floor)) @ vectors.T
    return 0.5 * (repaired + repaired.T)


def _v11_factor(fit: Stage1Fit, repair: bool):
    try:
        return scipy.linalg.cho_factor(fit.v11, lower=True), fit.v11
    except np.linalg.LinAlgError:
        if not repair:
            raise NotPositiveDefiniteError("V11", city_id=fit.city_id)
    repaired = nearest_pd(fit.v11)
    logger.warning(f"[city {fit.city_id}] V11 is not positive definite; using the nearest-PD repair")
    try:
        return scipy.linalg.cho_factor(repaired, lower=True), repaired
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("V11", city_id=fit.city_id)


def log_likelihood_stage2(fit: Stage1Fit, A: np.ndarray, theta: np.ndarray, repair: bool = False) -> float:
    """Gaussian log-density of beta_hat at mean A theta with covariance V11."""
    factor, _ = _v11_factor(fit, repair)
    residual = fit.beta_hat - A @ np.asarray(theta, dtype=np.float64)
    log_det = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    quad = float(residual @ scipy.linalg.cho_solve(factor, residual))
    return -0.5 * (residual.shape[0] * _LOG_2PI + log_det + quad)


def gamma_posterior_mean(fit: Stage1Fit, A: np.ndarray, theta_bar: np.ndarray) -> np.ndarray:
    """E(gamma | .) = gamma_hat + V21 V11^-1 (A theta_bar - beta_hat); no sampling needed."""
    try:
        factor = scipy.linalg.cho_factor(fit.v11, lower=True)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("V11", city_id=fit.city_id)
    gap = A @ np.asarray(theta_bar, dtype=np.float64) - fit.beta_hat
    return fit.gamma_hat + fit.v21 @ scipy.linalg.cho_solve(factor, gap)


@dataclass
class CityLikelihood:
    """
    Precomputed quadratic form of one city's likelihood in theta:
    log L = const - theta^T H theta / 2 + b^T theta, H = A^T V11^-1 A, b = A^T V11^-1 beta_hat.
    """

    city_id: str
    A: np.ndarray
    H: np.ndarray
    b: np.ndarray
    constant: float

    @classmethod
    def build(
        cls,
        fit: Stage1Fit,
        bases: tuple[BernsteinBasis1D, BernsteinBasis1D],
        t_inv: Optional[np.ndarray] = None,
        repair: bool = False,
    ) -> "CityLikelihood":
        A = projection_matrix(fit, bases, t_inv)
        factor, _ = _v11_factor(fit, repair)
        w_a = scipy.linalg.cho_solve(factor, A)
        w_beta = scipy.linalg.cho_solve(factor, fit.beta_hat)
        log_det = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
        constant = -0.5 * (fit.beta_hat.shape[0] * _LOG_2PI + log_det + float(fit.beta_hat @ w_beta))
        H = A.T @ w_a
        return cls(city_id=fit.city_id, A=A, H=0.5 * (H + H.T), b=A.T @ w_beta, constant=constant)

    def log_density(self, theta: np.ndarray) -> float:
        return self.constant - 0.5 * float(theta @ self.H @ theta) + float(self.b @ theta)
