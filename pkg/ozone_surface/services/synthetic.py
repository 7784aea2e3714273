"""
Synthetic cities with known risk surfaces, for recovery checks and demos.

Temperature follows a seasonal cycle with AR(1) noise, ozone rises with
temperature, and deaths are Poisson with log mean
log(pop) + log(age rate) + f(ozone, temp) + day-of-week + trend + dewpoint.
"""

import logging
from typing import Optional

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from ..core.exceptions import ConfigurationError
from ..core.seeding import derive_rng
from ..models.city import COUNT_COLUMNS, CityData
from ..models.truth import CityTruth, GroundTruth
from ..schemas.pydantic.surface import BernsteinBasis1D, SurfaceSpec
from ..schemas.pydantic.config import RunConfig
from ..schemas.pydantic.synthetic import SynthSpec
from .basis import constrained_mask, eval_surface, psi_to_theta, theta_to_psi

logger = logging.getLogger(__name__)

# total log-rate increase across the full ozone range at effect_scale = 1
_OZONE_EFFECT = 0.12
_TEMP_CURVATURE = 0.15


def _temperature_coeffs(m2: int) -> np.ndarray:
    """Bernstein coefficients of a U-shaped temperature effect c (2u - 1)^2."""
    k = np.arange(m2 + 1, dtype=np.float64)
    if m2 == 0:
        return np.zeros(1)
    quadratic = k * (k - 1) / (m2 * (m2 - 1)) if m2 > 1 else np.zeros(m2 + 1)
    return _TEMP_CURVATURE * (4.0 * quadratic - 4.0 * k / m2 + 1.0)


def truth_surface(spec: SynthSpec, rng: np.random.Generator, multiplier: float) -> SurfaceSpec:
    m1, m2 = spec.orders
    ozone_basis = BernsteinBasis1D(
        order=m1, lo=spec.ozone_range[0], range=spec.ozone_range[1] - spec.ozone_range[0], name="ozone"
    )
    temp_basis = BernsteinBasis1D(
        order=m2, lo=spec.temp_range[0], range=spec.temp_range[1] - spec.temp_range[0], name="temp"
    )
    size = spec.effect_scale * _OZONE_EFFECT * multiplier
    j = np.arange(m1 + 1, dtype=np.float64)[:, None] / max(m1, 1)
    k = np.arange(m2 + 1, dtype=np.float64)[None, :] / max(m2, 1)
    temp_effect = _temperature_coeffs(m2)[None, :]

    if spec.family == "additive-linear":
        grid = size * j + temp_effect
    elif spec.family == "additive-nonlinear":
        jj = np.arange(m1 + 1, dtype=np.float64)[:, None]
        convex = jj * (jj - 1) / (m1 * (m1 - 1)) if m1 > 1 else j
        grid = 1.5 * size * convex + temp_effect
    elif spec.family == "interaction":
        grid = size * j * (0.4 + 1.2 * k) + temp_effect
    else:
        theta = rng.exponential(size / max(m1, 1), size=(m2 + 1, m1 + 1))
        theta[:, 0] = _temperature_coeffs(m2)
        psi = theta_to_psi(theta.ravel(), m1, m2)
        return SurfaceSpec(ozone_basis=ozone_basis, temp_basis=temp_basis, coeffs=psi)
    # coefficient grids are indexed [j, k]; psi runs with j fastest
    return SurfaceSpec(ozone_basis=ozone_basis, temp_basis=temp_basis, coeffs=grid.T.ravel())


def check_monotone(surface: SurfaceSpec, city_id: str) -> None:
    m1, m2 = surface.orders
    theta = psi_to_theta(surface.coeffs, m1, m2)
    worst = float(np.min(theta[constrained_mask(m1, m2)], initial=0.0))
    if worst < -1e-12:
        raise ConfigurationError(
            key="surfaces",
            message=f"Truth for city {city_id} is not monotone in ozone (min theta_jk for j >= 1 is {worst:.3g}).",
        )


def _weather(spec: SynthSpec, rng: np.random.Generator, dates: pd.DatetimeIndex):
    n = dates.shape[0]
    doy = dates.dayofyear.to_numpy(dtype=np.float64)
    season = -np.cos(2.0 * np.pi * (doy - 15.0) / 365.25)
    noise = lfilter([1.0], [1.0, -0.7], rng.normal(0.0, 5.0, size=n))
    temp_lo, temp_hi = spec.temp_range
    temp = rng.uniform(50.0, 65.0) + rng.uniform(15.0, 25.0) * season + noise
    temp = np.clip(temp, temp_lo + 0.5, temp_hi - 0.5)

    ozone_lo, ozone_hi = spec.ozone_range
    ozone_mean = 10.0 + spec.ozone_temp_slope * np.maximum(temp - 40.0, 0.0)
    ozone = ozone_mean * rng.lognormal(0.0, 0.35, size=n)
    ozone = np.clip(ozone, ozone_lo + 0.5, ozone_hi - 0.5)

    dewpoint = temp - 3.0 - rng.gamma(2.0, 5.0, size=n)
    return np.round(ozone, 3), np.round(temp, 3), np.round(dewpoint, 3)


def generate_synthetic(spec: SynthSpec) -> tuple[list[CityData], GroundTruth]:
    """Cities plus the ground-truth record; identical specs give identical output."""
    layout_rng = derive_rng(spec.seed, "simulate")
    lat = layout_rng.uniform(26.0, 48.0, size=spec.n_cities)
    lon = layout_rng.uniform(-122.0, -71.0, size=spec.n_cities)
    population = layout_rng.integers(spec.population_range[0], spec.population_range[1] + 1, size=spec.n_cities)
    multipliers = np.exp(layout_rng.normal(0.0, 0.15, size=spec.n_cities))

    start = pd.Timestamp(spec.start_date)
    dates = pd.date_range(start, periods=spec.n_days, freq="D")
    effects = spec.confounders

    cities: list[CityData] = []
    truths: list[CityTruth] = []
    for i in range(spec.n_cities):
        city_id = f"city{i + 1:02d}"
        rng = derive_rng(spec.seed, f"simulate/{city_id}")
        if spec.surfaces is not None:
            surface = spec.surfaces[i]
        else:
            surface = truth_surface(spec, rng, float(multipliers[i]))
        if spec.family == "monotone" or spec.surfaces is None:
            check_monotone(surface, city_id)

        ozone, temp, dewpoint = _weather(spec, rng, dates)
        f = eval_surface(surface, ozone, temp)
        dow = dates.dayofweek.to_numpy(dtype=np.float64)
        t = np.arange(spec.n_days, dtype=np.float64)
        shared = (
            np.log(population[i])
            + f
            + effects.dow_amplitude * np.cos(2.0 * np.pi * dow / 7.0)
            + effects.trend_amplitude * np.sin(2.0 * np.pi * t / (3.0 * 365.25))
            + effects.dewpoint_slope * (dewpoint - 50.0)
        )
        frame = pd.DataFrame({"date": dates})
        for column, rate in zip(COUNT_COLUMNS, effects.age_rates):
            frame[column] = rng.poisson(np.exp(shared + np.log(rate))).astype(np.float64)
        frame["ozone"], frame["temp"], frame["dewpoint"] = ozone, temp, dewpoint
        if spec.missing_rate > 0:
            for column in ("ozone", "temp", "dewpoint"):
                frame.loc[rng.random(spec.n_days) < spec.missing_rate, column] = np.nan

        region = "west" if lon[i] < -105.0 else ("central" if lon[i] < -90.0 else "east")
        cities.append(
            CityData(
                city_id=city_id,
                lat=round(float(lat[i]), 4),
                lon=round(float(lon[i]), 4),
                region=region,
                population=int(population[i]),
                frame=frame,
            )
        )
        truths.append(CityTruth(city_id=city_id, surface=surface, effect_multiplier=float(multipliers[i])))
        logger.debug(f"[city {city_id}] simulated {spec.n_days} days, family {spec.family}")

    logger.info(f"Simulated {spec.n_cities} cities ({spec.family}), seed {spec.seed}")
    return cities, GroundTruth(seed=spec.seed, family=spec.family, cities=truths)


def synth_spec_from_config(config: RunConfig, family: Optional[str] = None) -> SynthSpec:
    return SynthSpec(
        n_cities=config.n_cities,
        n_days=config.n_days,
        start_date=config.start_date,
        family=family or config.synth_family,
        effect_scale=config.effect_scale,
        seed=config.seed,
    )
