from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..schemas.pydantic.surface import BernsteinBasis1D
from ..schemas.types import NDArray


class Stage1Fit(BaseModel):
    """
    First-stage output for one city: (beta_hat, gamma_hat), the partitioned
    covariance and the local basis it was estimated on. Stored as JSON, one
    file per city, so stage 2 can run without refitting.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    city_id: str
    lat: float
    lon: float
    region: str = "unknown"
    population: int
    n_days: int
    beta_hat: NDArray
    gamma_hat: NDArray
    gamma_labels: list[str] = Field(default_factory=list)
    v11: NDArray
    v12: NDArray
    v22: NDArray
    local_ozone_basis: BernsteinBasis1D
    local_temp_basis: BernsteinBasis1D
    ozone_obs: NDArray
    temp_obs: NDArray
    dispersion: float = 1.0
    deviance: float = 0.0
    iterations: int = 0

    @model_validator(mode="after")
    def _shapes(self) -> "Stage1Fit":
        n_beta = self.local_ozone_basis.size * self.local_temp_basis.size
        if self.beta_hat.shape != (n_beta,):
            raise ValueError(f"beta_hat must have length {n_beta}")
        if self.n_days <= n_beta:
            raise ValueError(f"n_days ({self.n_days}) must exceed the basis dimension ({n_beta})")
        n_gamma = self.gamma_hat.shape[0]
        if self.v11.shape != (n_beta, n_beta) or self.v12.shape != (n_beta, n_gamma):
            raise ValueError("covariance blocks do not match the coefficient lengths")
        if self.v22.shape != (n_gamma, n_gamma):
            raise ValueError("v22 does not match gamma_hat")
        if self.ozone_obs.shape != self.temp_obs.shape or self.ozone_obs.shape[0] != self.n_days:
            raise ValueError("observed ozone/temp must have one value per analysed day")
        return self

    @property
    def v21(self) -> np.ndarray:
        return self.v12.T

    @property
    def local_orders(self) -> tuple[int, int]:
        return self.local_ozone_basis.order, self.local_temp_basis.order

    def save(self, path: Path) -> None:
        Path(path).write_text(self.model_dump_json(indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "Stage1Fit":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))


class GlobalBasisRecord(BaseModel):
    """Second-stage (global) bases plus the list of cities fitted in stage 1."""

    model_config = ConfigDict(frozen=True)

    ozone_basis: BernsteinBasis1D
    temp_basis: BernsteinBasis1D
    city_ids: list[str]
    skipped: dict[str, str] = Field(default_factory=dict)

    def save(self, path: Path) -> None:
        Path(path).write_text(self.model_dump_json(indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "GlobalBasisRecord":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))
