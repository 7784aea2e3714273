"""
Truncated spatial Gaussian-process prior on the latent coefficients:

    vec(Theta*) ~ N(1 kron mu, R kron S2 kron S1),  R[c, c'] = exp(-d(c, c') / rho)
    mu ~ N(mu0 1, (S2 kron S1) / tau)

Vectors use the psi ordering (ozone index fastest), so a coefficient vector v
corresponds to the (M1+1, M2+1) matrix F = v.reshape(M2+1, M1+1).T and
(S2 kron S1) v corresponds to S1 F S2^T.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ...core.exceptions import NotPositiveDefiniteError
from ...schemas.pydantic.config import Hyperpriors


def exponential_correlation(distances: np.ndarray, rho: float) -> np.ndarray:
    return np.exp(-np.asarray(distances, dtype=np.float64) / rho)


def as_grid(vectors: np.ndarray, p1: int, p2: int) -> np.ndarray:
    """psi-ordered vector(s) to (..., M1+1, M2+1) coefficient matrices."""
    vectors = np.asarray(vectors, dtype=np.float64)
    return np.swapaxes(vectors.reshape(*vectors.shape[:-1], p2, p1), -1, -2)


def as_vector(grids: np.ndarray) -> np.ndarray:
    grids = np.asarray(grids, dtype=np.float64)
    return np.swapaxes(grids, -1, -2).reshape(*grids.shape[:-2], -1)


def cholesky_or_raise(matrix: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(what)


@dataclass
class SpatialPrior:
    s1: np.ndarray
    s2: np.ndarray
    rho: float
    mu: np.ndarray
    mu0: float
    tau: float
    distance_matrix: np.ndarray
    spatial: bool = True
    nugget: float = 0.0

    @classmethod
    def initial(
        cls,
        m1: int,
        m2: int,
        distances: np.ndarray,
        hyper: Hyperpriors,
        spatial: bool = True,
        nugget: float = 0.0,
    ) -> "SpatialPrior":
        """Starting values: identity factors, zero means, tau = 1, rho = exp(mu_rho)."""
        return cls(
            s1=np.eye(m1 + 1),
            s2=np.eye(m2 + 1),
            rho=float(np.exp(hyper.mu_rho)),
            mu=np.zeros((m1 + 1) * (m2 + 1)),
            mu0=0.0,
            tau=1.0,
            distance_matrix=np.asarray(distances, dtype=np.float64),
            spatial=spatial,
            nugget=nugget,
        )

    @property
    def n_cities(self) -> int:
        return self.distance_matrix.shape[0]

    def correlation(self) -> np.ndarray:
        if not self.spatial:
            return np.eye(self.n_cities)
        return self.correlation_at(self.rho)

    def correlation_at(self, rho: float) -> np.ndarray:
        """R at range rho, plus the nugget on the diagonal."""
        correlation = exponential_correlation(self.distance_matrix, rho)
        if self.nugget:
            correlation[np.diag_indices_from(correlation)] += self.nugget
        return correlation

    def sigma(self) -> np.ndarray:
        return np.kron(self.s2, self.s1)

    def cross_covariance(self, c: int, other: int) -> np.ndarray:
        """cov(theta*_c, theta*_c') = R[c, c'] (S2 kron S1)."""
        return self.correlation()[c, other] * self.sigma()

    def joint_covariance(self) -> np.ndarray:
        return np.kron(self.correlation(), self.sigma())

    def validate(self) -> None:
        cholesky_or_raise(self.s1, "S1")
        cholesky_or_raise(self.s2, "S2")
        if not self.rho > 0 or not self.tau > 0:
            raise ValueError("rho and tau must be positive")


def correlation_precision(correlation: np.ndarray) -> tuple[np.ndarray, float]:
    """(R^-1, log|R|) from a Cholesky factor."""
    factor = scipy.linalg.cho_factor(correlation, lower=True)
    inverse = scipy.linalg.cho_solve(factor, np.eye(correlation.shape[0]))
    log_det = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    return 0.5 * (inverse + inverse.T), log_det


def colocated_pairs(distances: np.ndarray) -> list[tuple[int, int]]:
    """Index pairs of distinct cities at zero distance; their rows of R coincide."""
    rows, cols = np.nonzero(np.triu(np.asarray(distances) <= 0.0, k=1))
    return [(int(a), int(b)) for a, b in zip(rows, cols)]
