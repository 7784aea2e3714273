import datetime as dt
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import SynthFamily
from .surface import SurfaceSpec


class ConfounderEffects(BaseModel):
    """Log-scale confounder signal used to generate synthetic deaths."""

    # daily deaths per person in each age group, before the surface and other effects
    age_rates: tuple[float, float, float] = (1.2e-5, 8.0e-6, 2.0e-5)
    dow_amplitude: float = Field(0.03, ge=0)
    trend_amplitude: float = Field(0.05, ge=0, description="Amplitude of the slow calendar-time wave")
    dewpoint_slope: float = Field(0.0005, description="Log-rate change per degree of dewpoint")


class SynthSpec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n_cities: int = Field(10, ge=1)
    n_days: int = Field(3000, ge=30, description="Consecutive calendar days per city")
    start_date: dt.date = dt.date(1987, 1, 1)
    family: SynthFamily = "interaction"
    effect_scale: float = Field(1.0, ge=0)
    orders: tuple[int, int] = (7, 9)
    ozone_range: tuple[float, float] = (0.0, 160.0)
    temp_range: tuple[float, float] = (30.0, 110.0)
    ozone_temp_slope: float = Field(0.9, description="ppb of mean ozone per degree F")
    population_range: tuple[int, int] = (500_000, 3_000_000)
    surfaces: Optional[list[SurfaceSpec]] = Field(
        None, description="Explicit per-city truths; must satisfy the monotone cone"
    )
    confounders: ConfounderEffects = ConfounderEffects()
    missing_rate: float = Field(0.0, ge=0, lt=0.5, description="Share of covariate cells left empty")
    seed: int = 20140601

    @model_validator(mode="after")
    def _explicit_surfaces(self) -> "SynthSpec":
        if self.surfaces is not None and len(self.surfaces) != self.n_cities:
            raise ValueError("surfaces must provide one SurfaceSpec per city")
        if self.ozone_range[1] <= self.ozone_range[0] or self.temp_range[1] <= self.temp_range[0]:
            raise ValueError("ranges must be increasing")
        return self
