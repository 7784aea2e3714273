"""
Bernstein polynomial bases, tensor-product surfaces and their exact derivatives.

Derivatives are reported per native unit (per ppb of ozone, per degree F of
temperature): the unit-interval derivative is divided by the variable's range.
Tensor rows are ``kron(temp_row, ozone_row)`` so the ozone index varies fastest,
matching the psi ordering of ``SurfaceSpec``.
"""

import logging
from typing import Union

import numpy as np

from ..core.exceptions import DomainError
from ..schemas.pydantic.surface import BernsteinBasis1D, MonotoneCoeffs, SurfaceSpec

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# relative slack for values that sit on a boundary up to rounding
_EDGE_TOLERANCE = 1e-9


def bernstein_matrix(u: np.ndarray, order: int) -> np.ndarray:
    """
    Evaluate b_0..b_M at points ``u`` in [0, 1] with the de Casteljau recurrence
    b_k^m = (1 - u) b_k^{m-1} + u b_{k-1}^{m-1}. Returns shape (len(u), M + 1).
    """
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    values = np.zeros((u.shape[0], order + 1))
    values[:, 0] = 1.0
    one_minus = 1.0 - u
    for m in range(1, order + 1):
        values[:, 1 : m + 1] = one_minus[:, None] * values[:, 1 : m + 1] + u[:, None] * values[:, :m]
        values[:, 0] *= one_minus
    return values


def rescale(basis: BernsteinBasis1D, x: ArrayLike) -> np.ndarray:
    """Map native values onto [0, 1]; values outside [lo, lo + range] raise DomainError."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    u = (x - basis.lo) / basis.range
    bad = ~np.isfinite(u) | (u < -_EDGE_TOLERANCE) | (u > 1.0 + _EDGE_TOLERANCE)
    if np.any(bad):
        worst = x[bad][0]
        raise DomainError(
            variable=basis.name,
            lo=basis.lo,
            hi=basis.hi,
            message=f"{basis.name}={worst:.6g} outside the basis domain [{basis.lo:.6g}, {basis.hi:.6g}].",
        )
    return np.clip(u, 0.0, 1.0)


def in_domain(basis: BernsteinBasis1D, x: ArrayLike) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    slack = _EDGE_TOLERANCE * basis.range
    return np.isfinite(x) & (x >= basis.lo - slack) & (x <= basis.hi + slack)


def eval_basis_1d(basis: BernsteinBasis1D, x: ArrayLike) -> np.ndarray:
    """
    Basis vector (b_0(u, M), ..., b_M(u, M)) with u = (x - lo) / range.
    A scalar ``x`` gives a vector, an array gives one row per value.
    """
    values = bernstein_matrix(rescale(basis, x), basis.order)
    return values[0] if np.ndim(x) == 0 else values


def basis_derivative_1d(basis: BernsteinBasis1D, x: ArrayLike) -> np.ndarray:
    """
    d b_k / dx per native unit: (M / r) [b_{k-1}(u, M-1) - b_k(u, M-1)].
    Order 0 gives zeros.
    """
    u = rescale(basis, x)
    out = np.zeros((u.shape[0], basis.size))
    if basis.order > 0:
        lower = bernstein_matrix(u, basis.order - 1)
        out[:, 1:] += lower
        out[:, :-1] -= lower
        out *= basis.order / basis.range
    return out[0] if np.ndim(x) == 0 else out


def _rows(basis: BernsteinBasis1D, x: ArrayLike, derivative: bool) -> np.ndarray:
    if derivative:
        return np.atleast_2d(basis_derivative_1d(basis, np.atleast_1d(x)))
    return np.atleast_2d(eval_basis_1d(basis, np.atleast_1d(x)))


def tensor_design(
    ozone_basis: BernsteinBasis1D,
    temp_basis: BernsteinBasis1D,
    ozone: ArrayLike,
    temp: ArrayLike,
    d_ozone: bool = False,
    d_temp: bool = False,
) -> np.ndarray:
    """
    Row-wise tensor basis, one row per (ozone, temp) pair, columns in psi order.
    ``d_ozone`` / ``d_temp`` swap in the native-unit derivative of that margin.
    """
    oz_rows = _rows(ozone_basis, ozone, d_ozone)
    tp_rows = _rows(temp_basis, temp, d_temp)
    if oz_rows.shape[0] != tp_rows.shape[0]:
        raise ValueError("ozone and temp must have the same length")
    return (tp_rows[:, :, None] * oz_rows[:, None, :]).reshape(oz_rows.shape[0], -1)


def _surface_value(spec: SurfaceSpec, ozone, temp, d_ozone: bool, d_temp: bool):
    design = tensor_design(spec.ozone_basis, spec.temp_basis, ozone, temp, d_ozone, d_temp)
    values = design @ spec.coeffs
    return float(values[0]) if np.ndim(ozone) == 0 and np.ndim(temp) == 0 else values


def eval_surface(spec: SurfaceSpec, ozone: ArrayLike, temp: ArrayLike):
    """f(x) = sum_j sum_k psi_jk B_1j(ozone) B_2k(temp)."""
    return _surface_value(spec, ozone, temp, False, False)


def eval_dfdx1(spec: SurfaceSpec, ozone: ArrayLike, temp: ArrayLike):
    """Log RR: partial derivative of f in ozone, per ppb."""
    return _surface_value(spec, ozone, temp, True, False)


def eval_cross_deriv(spec: SurfaceSpec, ozone: ArrayLike, temp: ArrayLike):
    """Interaction surface: d2 f / (d ozone d temp), per ppb per degree."""
    return _surface_value(spec, ozone, temp, True, True)


def transform_matrix(m1: int, m2: int) -> np.ndarray:
    """
    T = I_{M2+1} kron D, with D the (M1+1)-square lower bidiagonal (1 on the
    diagonal, -1 below it): theta_0k = psi_0k, theta_jk = psi_jk - psi_{j-1,k}.
    """
    if m1 < 0 or m2 < 0:
        raise ValueError("orders must be nonnegative")
    block = np.eye(m1 + 1) - np.eye(m1 + 1, k=-1)
    return np.kron(np.eye(m2 + 1), block)


def inverse_transform_matrix(m1: int, m2: int) -> np.ndarray:
    """T^-1: block-diagonal lower-triangular ones (cumulative sums within each k block)."""
    if m1 < 0 or m2 < 0:
        raise ValueError("orders must be nonnegative")
    return np.kron(np.eye(m2 + 1), np.tril(np.ones((m1 + 1, m1 + 1))))


def theta_to_psi(theta: np.ndarray, m1: int, m2: int) -> np.ndarray:
    """Apply T^-1 along the last axis (works on stacks of draws)."""
    theta = np.asarray(theta, dtype=np.float64)
    lead = theta.shape[:-1]
    grid = theta.reshape(*lead, m2 + 1, m1 + 1)
    return np.cumsum(grid, axis=-1).reshape(*lead, (m1 + 1) * (m2 + 1))


def psi_to_theta(psi: np.ndarray, m1: int, m2: int) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.float64)
    lead = psi.shape[:-1]
    grid = psi.reshape(*lead, m2 + 1, m1 + 1)
    theta = np.diff(grid, axis=-1, prepend=0.0)
    return theta.reshape(*lead, (m1 + 1) * (m2 + 1))


def constrained_mask(m1: int, m2: int) -> np.ndarray:
    """True for the theta_jk with j >= 1, the coordinates the monotone cone bounds below."""
    grid = np.ones((m2 + 1, m1 + 1), dtype=bool)
    grid[:, 0] = False
    return grid.ravel()


def truncate_array(theta_star: np.ndarray, m1: int, m2: int) -> np.ndarray:
    """max(0, theta*) on the j >= 1 coordinates, along the last axis."""
    theta_star = np.asarray(theta_star, dtype=np.float64)
    mask = constrained_mask(m1, m2)
    return np.where(mask, np.maximum(theta_star, 0.0), theta_star)


def truncate_theta(theta_star: np.ndarray, m1: int, m2: int) -> MonotoneCoeffs:
    theta_star = np.asarray(theta_star, dtype=np.float64)
    if theta_star.shape != ((m1 + 1) * (m2 + 1),):
        raise ValueError(
            f"theta_star must have length (M1+1)(M2+1) = {(m1 + 1) * (m2 + 1)}, got {theta_star.shape}"
        )
    return MonotoneCoeffs(theta=truncate_array(theta_star, m1, m2), m1=m1, m2=m2)


def surface_from_theta(
    theta: np.ndarray, ozone_basis: BernsteinBasis1D, temp_basis: BernsteinBasis1D
) -> SurfaceSpec:
    psi = theta_to_psi(theta, ozone_basis.order, temp_basis.order)
    return SurfaceSpec(ozone_basis=ozone_basis, temp_basis=temp_basis, coeffs=psi)
