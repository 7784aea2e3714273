import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from ..core.exceptions import FittingError, InsufficientDataError, OzoneSurfaceError, SchemaError
from ..models.city import CityData
from ..models.stage1 import GlobalBasisRecord, Stage1Fit
from ..schemas.pydantic.config import ConfounderConfig, RunConfig
from ..schemas.pydantic.surface import BernsteinBasis1D
from .basis import tensor_design
from .confounders import AGE_GROUPS, ConfounderDesign, analysis_frame, build_confounder_design, stack_response
from .glm import fit_poisson_quasi, partition_covariance

logger = logging.getLogger(__name__)

# the tensor basis sums to one on every row, so it already carries the first age group's level
REDUNDANT_INTERCEPT = f"age_{AGE_GROUPS[0]}"


def local_orders(
    r1c: float,
    r2c: float,
    r1: float,
    r2: float,
    m1: int,
    m2: int,
    min_ozone: int = 6,
    min_temp: int = 4,
) -> tuple[int, int]:
    """
    City orders scaled by the share of the global range the city covers:
    max(round(r1c M1 / r1), 6) and max(round(r2c M2 / r2), 4), with Python's
    round-half-even. A floor never exceeds the global order.
    """
    if min(r1c, r2c, r1, r2) <= 0:
        raise ValueError("ranges must be positive")
    m1c = max(int(round(r1c * m1 / r1)), min(min_ozone, m1))
    m2c = max(int(round(r2c * m2 / r2)), min(min_temp, m2))
    return m1c, m2c


def global_bases(frames: Iterable[pd.DataFrame], m1: int, m2: int) -> tuple[BernsteinBasis1D, BernsteinBasis1D]:
    """Second-stage bases spanning every analysed day of every city."""
    frames = list(frames)
    if not frames:
        raise InsufficientDataError(message="No cities to build the global basis from.")
    ozone = np.concatenate([f["ozone"].to_numpy(dtype=np.float64) for f in frames])
    temp = np.concatenate([f["temp"].to_numpy(dtype=np.float64) for f in frames])
    return (
        BernsteinBasis1D.spanning(ozone, m1, name="ozone"),
        BernsteinBasis1D.spanning(temp, m2, name="temp"),
    )


def surface_labels(m1: int, m2: int) -> list[str]:
    return [f"beta_{j}_{k}" for k in range(m2 + 1) for j in range(m1 + 1)]


def fit_city(
    city: CityData,
    bases: tuple[BernsteinBasis1D, BernsteinBasis1D],
    cfg: RunConfig,
    confounder_cfg: Optional[ConfounderConfig] = None,
    design: Optional[ConfounderDesign] = None,
    day_mask: Optional[np.ndarray] = None,
) -> Stage1Fit:
    """
    First-stage quasi-Poisson fit of one city on its local Bernstein basis.

    ``design`` may be supplied precomputed; ``day_mask`` restricts the fit to a
    subset of the analysed days (cross-validation training rows) while the
    confounder splines keep the knots of the full design.
    """
    confounder_cfg = confounder_cfg or cfg.confounder_config()
    if design is None:
        design = build_confounder_design(city, confounder_cfg)
    if day_mask is not None:
        design = design.take_days(day_mask)
    frame = design.frame
    n = design.n_days

    ozone = frame["ozone"].to_numpy(dtype=np.float64)
    temp = frame["temp"].to_numpy(dtype=np.float64)
    r1c, r2c = float(np.ptp(ozone)), float(np.ptp(temp))
    if r1c <= 0 or r2c <= 0:
        variable = "ozone" if r1c <= 0 else "temp"
        raise FittingError(city.city_id, f"{variable} is constant over the analysed days")
    global_ozone, global_temp = bases
    m1c, m2c = local_orders(
        r1c, r2c, global_ozone.range, global_temp.range, global_ozone.order, global_temp.order,
        cfg.min_order_ozone, cfg.min_order_temp,
    )
    n_beta = (m1c + 1) * (m2c + 1)
    if n <= n_beta:
        raise InsufficientDataError(
            city.city_id, f"City {city.city_id}: {n} days do not exceed the basis dimension {n_beta}."
        )
    logger.info(f"[city {city.city_id}] {n} days, local orders ({m1c}, {m2c})")

    local_ozone = BernsteinBasis1D.spanning(ozone, m1c, name="ozone")
    local_temp = BernsteinBasis1D.spanning(temp, m2c, name="temp")
    surface = tensor_design(local_ozone, local_temp, ozone, temp)
    confounders = design.drop_columns([REDUNDANT_INTERCEPT])

    X = np.hstack([np.tile(surface, (len(AGE_GROUPS), 1)), confounders.matrix])
    y = stack_response(frame)
    offset = np.full(y.shape[0], np.log(city.population))
    fit = fit_poisson_quasi(
        y,
        X,
        offset,
        tol=cfg.glm_tol,
        max_iter=cfg.glm_max_iter,
        column_labels=surface_labels(m1c, m2c) + confounders.column_labels,
        city_id=city.city_id,
    )
    v11, v12, _, v22 = partition_covariance(fit, n_beta)
    return Stage1Fit(
        city_id=city.city_id,
        lat=city.lat,
        lon=city.lon,
        region=city.region,
        population=city.population,
        n_days=n,
        beta_hat=fit.coefficients[:n_beta],
        gamma_hat=fit.coefficients[n_beta:],
        gamma_labels=confounders.column_labels,
        v11=v11,
        v12=v12,
        v22=v22,
        local_ozone_basis=local_ozone,
        local_temp_basis=local_temp,
        ozone_obs=ozone,
        temp_obs=temp,
        dispersion=fit.dispersion,
        deviance=fit.deviance,
        iterations=fit.iterations,
    )


class Stage1Service:
    """
    Runs first-stage fits for a set of cities. Cities are processed on a thread
    pool and collected in input order.
    """

    def __init__(self, config: RunConfig, confounder_cfg: Optional[ConfounderConfig] = None):
        self.config = config
        self.confounder_cfg = confounder_cfg or config.confounder_config()

    def _map(self, func, items: Sequence):
        if self.config.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
                return list(pool.map(func, items))
        return [func(item) for item in items]

    @staticmethod
    def _guard(func):
        def wrapped(item):
            try:
                return func(item)
            except OzoneSurfaceError as exc:
                return exc

        return wrapped

    def _settle(self, cities: Sequence[CityData], results: list, skipped: dict[str, str]) -> list:
        kept = []
        for city, result in zip(cities, results):
            if isinstance(result, OzoneSurfaceError):
                if not self.config.allow_skip:
                    raise result
                logger.warning(f"[city {city.city_id}] skipped: {result}")
                skipped[city.city_id] = str(result)
            else:
                kept.append((city, result))
        return kept

    def designs(self, cities: Sequence[CityData], skipped: dict[str, str]) -> list[tuple[CityData, ConfounderDesign]]:
        build = self._guard(lambda city: build_confounder_design(city, self.confounder_cfg))
        return self._settle(cities, self._map(build, list(cities)), skipped)

    def run(self, cities: Sequence[CityData]) -> tuple[list[Stage1Fit], GlobalBasisRecord]:
        skipped: dict[str, str] = {}
        prepared = self.designs(cities, skipped)
        if not prepared:
            raise InsufficientDataError(message="No city has usable data for the first stage.")
        bases = global_bases([design.frame for _, design in prepared], self.config.m1, self.config.m2)

        fit = self._guard(
            lambda pair: fit_city(pair[0], bases, self.config, self.confounder_cfg, design=pair[1])
        )
        fitted = self._settle([city for city, _ in prepared], self._map(fit, prepared), skipped)
        fits = [result for _, result in fitted]
        if not fits:
            raise FittingError(message="Every city failed the first stage.")
        record = GlobalBasisRecord(
            ozone_basis=bases[0],
            temp_basis=bases[1],
            city_ids=[f.city_id for f in fits],
            skipped=skipped,
        )
        logger.info(f"Stage 1 finished: {len(fits)} cities fitted, {len(skipped)} skipped")
        return fits, record


GLOBAL_RECORD_FILE = "global.json"


def save_stage1(directory: Path, fits: Sequence[Stage1Fit], record: GlobalBasisRecord) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for fit in fits:
        fit.save(directory / f"{fit.city_id}.json")
    record.save(directory / GLOBAL_RECORD_FILE)


def load_stage1(directory: Path) -> tuple[list[Stage1Fit], GlobalBasisRecord]:
    directory = Path(directory)
    record_path = directory / GLOBAL_RECORD_FILE
    if not record_path.is_file():
        raise SchemaError(str(record_path), message="stage-1 output not found (run the stage1 command first)")
    record = GlobalBasisRecord.load(record_path)
    fits = []
    for city_id in record.city_ids:
        path = directory / f"{city_id}.json"
        if not path.is_file():
            raise SchemaError(str(path), message=f"missing stage-1 fit for city {city_id}")
        fits.append(Stage1Fit.load(path))
    return fits, record
