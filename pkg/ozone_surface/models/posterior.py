"""
Retained MCMC draws and their on-disk layout.

``posterior_draws.csv`` has one row per retained draw per city (theta* and
theta entries plus the scalar hyperparameters), ``posterior_hyper.csv`` one row
per draw with mu, S1 and S2, and ``posterior_meta.json`` the bases, city order
and chain settings.
"""

from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.exceptions import SchemaError
from ..schemas.pydantic.surface import BernsteinBasis1D
from ..schemas.types import NDArray

DRAWS_FILE = "posterior_draws.csv"
HYPER_FILE = "posterior_hyper.csv"
META_FILE = "posterior_meta.json"


class ChainMeta(BaseModel):
    iterations: int
    burn_in: int
    thin: int
    seed: int
    stream: str = "stage2"
    truncate: bool = True
    spatial: bool = True
    use_likelihood: bool = True
    rho_acceptance: float = 0.0
    final_rho_step: float = 0.0
    rejected_updates: int = 0
    iw_redraws: int = 0


class PosteriorMeta(BaseModel):
    city_ids: list[str]
    regions: list[str] = Field(default_factory=list)
    ozone_basis: BernsteinBasis1D
    temp_basis: BernsteinBasis1D
    chain: ChainMeta


class PosteriorSample(BaseModel):
    """
    Arrays are indexed by draw first: theta_star / theta (D, N, P), mu (D, P),
    s1 (D, M1+1, M1+1), s2 (D, M2+1, M2+1), scalars (D,).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    meta: PosteriorMeta
    theta_star: NDArray
    theta: NDArray
    mu: NDArray
    mu0: NDArray
    tau: NDArray
    s1: NDArray
    s2: NDArray
    rho: NDArray
    log_posterior: NDArray

    @model_validator(mode="after")
    def _shapes(self) -> "PosteriorSample":
        d = self.theta_star.shape[0]
        p = self.meta.ozone_basis.size * self.meta.temp_basis.size
        if self.theta_star.shape != (d, len(self.meta.city_ids), p) or self.theta.shape != self.theta_star.shape:
            raise ValueError("theta draws must have shape (draws, cities, coefficients)")
        for name in ("mu0", "tau", "rho", "log_posterior"):
            if getattr(self, name).shape != (d,):
                raise ValueError(f"{name} must have one value per draw")
        return self

    @property
    def n_draws(self) -> int:
        return int(self.theta_star.shape[0])

    @property
    def city_ids(self) -> list[str]:
        return self.meta.city_ids

    @property
    def orders(self) -> tuple[int, int]:
        return self.meta.ozone_basis.order, self.meta.temp_basis.order

    @property
    def bases(self) -> tuple[BernsteinBasis1D, BernsteinBasis1D]:
        return self.meta.ozone_basis, self.meta.temp_basis

    def city_index(self, city_id: str) -> int:
        try:
            return self.meta.city_ids.index(city_id)
        except ValueError:
            raise KeyError(f"city {city_id} is not in the posterior sample")

    def city_theta(self, city_id: str) -> np.ndarray:
        return self.theta[:, self.city_index(city_id), :]

    def theta_mean(self, city_id: str) -> np.ndarray:
        return self.city_theta(city_id).mean(axis=0)

    def region_of(self, city_id: str) -> str:
        if not self.meta.regions:
            return "unknown"
        return self.meta.regions[self.city_index(city_id)]

    def coefficient_labels(self) -> list[str]:
        m1, m2 = self.orders
        return [f"{j}_{k}" for k in range(m2 + 1) for j in range(m1 + 1)]

    def save(self, directory: Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        labels = self.coefficient_labels()
        d, n, p = self.theta_star.shape
        draws = pd.DataFrame(
            {
                "draw": np.repeat(np.arange(d), n),
                "city_id": np.tile(np.asarray(self.city_ids, dtype=object), d),
            }
        )
        star = pd.DataFrame(self.theta_star.reshape(d * n, p), columns=[f"theta_star_{l}" for l in labels])
        theta = pd.DataFrame(self.theta.reshape(d * n, p), columns=[f"theta_{l}" for l in labels])
        scalars = pd.DataFrame(
            {
                "mu0": np.repeat(self.mu0, n),
                "tau": np.repeat(self.tau, n),
                "rho": np.repeat(self.rho, n),
                "log_posterior": np.repeat(self.log_posterior, n),
            }
        )
        pd.concat([draws, star, theta, scalars], axis=1).to_csv(
            directory / DRAWS_FILE, index=False, float_format="%.17g", lineterminator="\n"
        )

        p1, p2 = self.s1.shape[1], self.s2.shape[1]
        hyper = pd.concat(
            [
                pd.DataFrame({"draw": np.arange(d)}),
                pd.DataFrame(self.mu, columns=[f"mu_{l}" for l in labels]),
                pd.DataFrame(self.s1.reshape(d, p1 * p1), columns=[f"s1_{a}_{b}" for a in range(p1) for b in range(p1)]),
                pd.DataFrame(self.s2.reshape(d, p2 * p2), columns=[f"s2_{a}_{b}" for a in range(p2) for b in range(p2)]),
            ],
            axis=1,
        )
        hyper.to_csv(directory / HYPER_FILE, index=False, float_format="%.17g", lineterminator="\n")
        (directory / META_FILE).write_text(self.meta.model_dump_json(indent=1), encoding="utf-8")

    @classmethod
    def load(cls, directory: Path) -> "PosteriorSample":
        directory = Path(directory)
        for name in (META_FILE, DRAWS_FILE, HYPER_FILE):
            if not (directory / name).is_file():
                raise SchemaError(str(directory / name), message="posterior output not found (run the stage2 command first)")
        meta = PosteriorMeta.model_validate_json((directory / META_FILE).read_text(encoding="utf-8"))
        draws = pd.read_csv(directory / DRAWS_FILE, dtype={"city_id": str}, float_precision="round_trip")
        hyper = pd.read_csv(directory / HYPER_FILE, float_precision="round_trip")
        n = len(meta.city_ids)
        d = hyper.shape[0]
        if draws.shape[0] != d * n:
            raise SchemaError(str(directory / DRAWS_FILE), message=f"expected {d * n} rows, found {draws.shape[0]}")
        star_cols = [c for c in draws.columns if c.startswith("theta_star_")]
        theta_cols = [c for c in draws.columns if c.startswith("theta_") and not c.startswith("theta_star_")]
        p = len(star_cols)
        first = draws.iloc[::n]
        p1, p2 = meta.ozone_basis.size, meta.temp_basis.size
        return cls(
            meta=meta,
            theta_star=draws[star_cols].to_numpy().reshape(d, n, p),
            theta=draws[theta_cols].to_numpy().reshape(d, n, p),
            mu=hyper[[c for c in hyper.columns if c.startswith("mu_")]].to_numpy(),
            mu0=first["mu0"].to_numpy(),
            tau=first["tau"].to_numpy(),
            s1=hyper[[c for c in hyper.columns if c.startswith("s1_")]].to_numpy().reshape(d, p1, p1),
            s2=hyper[[c for c in hyper.columns if c.startswith("s2_")]].to_numpy().reshape(d, p2, p2),
            rho=first["rho"].to_numpy(),
            log_posterior=first["log_posterior"].to_numpy(),
        )


def stack_draws(values: list[np.ndarray], shape: Optional[tuple[int, ...]] = None) -> np.ndarray:
    if values:
        return np.stack(values)
    return np.zeros((0,) + (shape or ()))
