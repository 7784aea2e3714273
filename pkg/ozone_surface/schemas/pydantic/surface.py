import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..types import NDArray


class BernsteinBasis1D(BaseModel):
    """Bernstein basis of order ``order`` on the native interval [lo, lo + range]."""

    model_config = ConfigDict(frozen=True)

    order: int = Field(..., ge=0, description="Polynomial order M")
    lo: float = Field(..., description="Variable minimum in native units")
    range: float = Field(..., description="Width r of the variable's interval")
    name: str = Field("x", description="Variable name used in domain errors")

    @field_validator("range")
    @classmethod
    def _positive_range(cls, value: float) -> float:
        if not np.isfinite(value) or value <= 0:
            raise ValueError(f"range must be positive, got {value}")
        return value

    @property
    def hi(self) -> float:
        return self.lo + self.range

    @property
    def size(self) -> int:
        return self.order + 1

    @classmethod
    def spanning(cls, values, order: int, name: str = "x") -> "BernsteinBasis1D":
        """Basis over the observed [min, max] of ``values``."""
        values = np.asarray(values, dtype=np.float64)
        lo = float(np.nanmin(values))
        return cls(order=order, lo=lo, range=float(np.nanmax(values)) - lo, name=name)


class SurfaceSpec(BaseModel):
    """
    One bivariate Bernstein surface. ``coeffs`` is the psi vector with the
    ozone index varying fastest: (psi_00, ..., psi_M1,0, psi_01, ..., psi_M1,M2).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    ozone_basis: BernsteinBasis1D
    temp_basis: BernsteinBasis1D
    coeffs: NDArray

    @model_validator(mode="after")
    def _coeff_length(self) -> "SurfaceSpec":
        expected = self.ozone_basis.size * self.temp_basis.size
        if self.coeffs.ndim != 1 or self.coeffs.shape[0] != expected:
            raise ValueError(
                f"coeffs must have length (M1+1)(M2+1) = {expected}, got shape {self.coeffs.shape}"
            )
        return self

    @property
    def orders(self) -> tuple[int, int]:
        return self.ozone_basis.order, self.temp_basis.order

    def coeff_grid(self) -> np.ndarray:
        """psi as an (M1+1, M2+1) array indexed [j, k]."""
        return self.coeffs.reshape(self.temp_basis.size, self.ozone_basis.size).T


class MonotoneCoeffs(BaseModel):
    """theta = T psi restricted to the monotone cone (theta_jk >= 0 for j >= 1)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    theta: NDArray
    m1: int = Field(..., ge=0)
    m2: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _in_cone(self) -> "MonotoneCoeffs":
        expected = (self.m1 + 1) * (self.m2 + 1)
        if self.theta.shape != (expected,):
            raise ValueError(f"theta must have length {expected}, got shape {self.theta.shape}")
        grid = self.theta.reshape(self.m2 + 1, self.m1 + 1)
        if np.any(grid[:, 1:] < 0):
            raise ValueError("theta_jk must be nonnegative for every j >= 1")
        return self
