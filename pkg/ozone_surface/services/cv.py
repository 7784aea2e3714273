"""
Single-split cross-validation comparing the surface models against additive
alternatives.

Each city's analysed days are split once (the split depends only on the seed
and the city id, so every model sees the same holdout days). Confounder
splines are built on all analysed days; only the fitting rows are split.
Holdout means use the posterior-mean surface on the global basis plus the
closed-form posterior mean of the confounder coefficients.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import gammaln
from tqdm import tqdm

from ..core.config import settings
from ..core.exceptions import ConfigurationError, InsufficientDataError, OzoneSurfaceError
from ..core.seeding import derive_rng
from ..models.city import CityData
from ..models.cv import CvModelResult, CvReport
from ..models.stage1 import Stage1Fit
from ..schemas.pydantic.config import MODEL_VARIANTS, RunConfig
from ..schemas.pydantic.surface import BernsteinBasis1D
from .basis import tensor_design, theta_to_psi
from .confounders import AGE_GROUPS, ConfounderDesign, build_confounder_design, stack_response
from .hier.likelihood import gamma_posterior_mean, projection_matrix
from .hier.sampler import run_chain
from .stage1 import REDUNDANT_INTERCEPT, fit_city, global_bases

logger = logging.getLogger(__name__)

# df of the same-day temperature spline that replaces the temperature margin in additive models
ADDITIVE_TEMP_DF = 6


class VariantSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    m1: int
    m2: int
    truncate: bool
    spatial: bool
    additive: bool


def variant_settings(variant: str, config: RunConfig) -> VariantSettings:
    """Orders and switches for each compared model."""
    if variant not in MODEL_VARIANTS:
        raise ConfigurationError(
            key="model_variant", message=f"Unknown model variant '{variant}'; choose from {', '.join(MODEL_VARIANTS)}."
        )
    if variant == "additive-nonlinear":
        return VariantSettings(m1=config.additive_order, m2=0, truncate=False, spatial=False, additive=True)
    if variant == "additive-linear":
        return VariantSettings(m1=1, m2=0, truncate=False, spatial=False, additive=True)
    return VariantSettings(
        m1=config.m1,
        m2=config.m2,
        truncate=variant.endswith("-monotone"),
        spatial=variant.startswith("spatial-"),
        additive=False,
    )


def holdout_mask(n_days: int, fraction: float, rng: np.random.Generator, contiguous: bool = False) -> np.ndarray:
    """Boolean training mask over ``n_days`` days."""
    if not 0 < fraction < 1:
        raise ConfigurationError(key="cv_fraction", message=f"cv_fraction must lie in (0, 1), got {fraction}")
    n_train = int(round(fraction * n_days))
    if n_train <= 0 or n_train >= n_days:
        raise InsufficientDataError(message=f"A {fraction:.0%} split of {n_days} days leaves an empty partition.")
    train = np.zeros(n_days, dtype=bool)
    if contiguous:
        n_test = n_days - n_train
        start = int(rng.integers(0, n_days - n_test + 1))
        train[:] = True
        train[start : start + n_test] = False
    else:
        train[rng.permutation(n_days)[:n_train]] = True
    return train


def split_holdout(
    city: CityData, fraction: float, seed: int, contiguous: bool = False
) -> tuple[CityData, CityData]:
    """Day-level (train, test) partition of a city, reproducible from the seed."""
    rng = derive_rng(seed, f"cv/split/{city.city_id}")
    train = holdout_mask(city.n_days, fraction, rng, contiguous)
    frame = city.frame
    return (
        city.with_frame(frame.loc[train].reset_index(drop=True)),
        city.with_frame(frame.loc[~train].reset_index(drop=True)),
    )


def holdout_deviance(y_hat: np.ndarray, y: np.ndarray) -> float:
    """sum 2 [y_hat - y log y_hat + log y!], i.e. -2 x Poisson log-likelihood."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(~np.isfinite(y_hat)) or np.any(y_hat <= 0):
        raise ValueError("predicted means must be strictly positive")
    return float(2.0 * np.sum(y_hat - y * np.log(y_hat) + gammaln(y + 1.0)))


def predict_log_mean(
    fit: Stage1Fit,
    design: ConfounderDesign,
    theta_bar: np.ndarray,
    bases: tuple[BernsteinBasis1D, BernsteinBasis1D],
    day_mask: np.ndarray,
) -> np.ndarray:
    """log E(Y) on the selected days, stacked age-major."""
    ozone_basis, temp_basis = bases
    frame = design.frame.loc[day_mask]
    psi = theta_to_psi(theta_bar, ozone_basis.order, temp_basis.order)
    surface = tensor_design(
        ozone_basis, temp_basis, frame["ozone"].to_numpy(dtype=np.float64), frame["temp"].to_numpy(dtype=np.float64)
    ) @ psi
    gamma_bar = gamma_posterior_mean(fit, projection_matrix(fit, bases), theta_bar)
    Z = design.take_days(day_mask).drop_columns([REDUNDANT_INTERCEPT])
    if Z.column_labels != fit.gamma_labels:
        raise ConfigurationError(message=f"[city {fit.city_id}] confounder columns differ between fit and prediction")
    return np.log(fit.population) + np.tile(surface, len(AGE_GROUPS)) + Z.matrix @ gamma_bar


class CvService:
    def __init__(self, config: RunConfig):
        self.config = config
        self.cv = config.cv_config()
        self._designs: dict[bool, list[tuple[CityData, ConfounderDesign]]] = {}
        self._masks: dict[str, np.ndarray] = {}

    def _guarded(self, city_id: str, skipped: dict[str, str], func):
        try:
            return func()
        except OzoneSurfaceError as exc:
            if not self.config.allow_skip:
                raise
            logger.warning(f"[city {city_id}] excluded from cross-validation: {exc}")
            skipped[city_id] = str(exc)
            return None

    def designs(self, cities: Sequence[CityData], additive: bool, skipped: dict[str, str]):
        if additive not in self._designs:
            cfg = self.config.confounder_config(same_day_temp_df=ADDITIVE_TEMP_DF if additive else None)
            built = []
            for city in cities:
                design = self._guarded(city.city_id, skipped, lambda: build_confounder_design(city, cfg))
                if design is not None:
                    built.append((city, design))
            self._designs[additive] = built
        return self._designs[additive]

    def train_mask(self, city: CityData, design: ConfounderDesign) -> np.ndarray:
        """Training days of the design, split over the days the design keeps."""
        if city.city_id not in self._masks:
            dates = design.frame["date"]
            analysed = city.with_frame(city.frame.loc[city.frame["date"].isin(dates)])
            train, _ = split_holdout(analysed, self.cv.fraction, self.cv.seed, self.cv.contiguous)
            self._masks[city.city_id] = dates.isin(train.frame["date"]).to_numpy()
        return self._masks[city.city_id]

    def run_variant(self, cities: Sequence[CityData], variant: str) -> CvModelResult:
        variant_cfg = variant_settings(variant, self.config)
        skipped: dict[str, str] = {}
        prepared = self.designs(cities, variant_cfg.additive, skipped)
        if not prepared:
            raise InsufficientDataError(message="No city has usable data for cross-validation.")
        bases = global_bases([design.frame for _, design in prepared], variant_cfg.m1, variant_cfg.m2)
        confounder_cfg = self.config.confounder_config(
            same_day_temp_df=ADDITIVE_TEMP_DF if variant_cfg.additive else None
        )

        fitted = []
        for city, design in prepared:
            train = self.train_mask(city, design)
            fit = self._guarded(
                city.city_id,
                skipped,
                lambda: fit_city(city, bases, self.config, confounder_cfg, design=design, day_mask=train),
            )
            if fit is not None:
                fitted.append((city, design, train, fit))
        if not fitted:
            raise InsufficientDataError(message=f"Every city failed the first stage for {variant}.")

        chain = self.config.chain_config(
            truncate=variant_cfg.truncate, spatial=variant_cfg.spatial, progress=False, seed=self.config.seed
        )
        sample = run_chain(
            [f for *_, f in fitted], bases, chain, self.config.hyperpriors(), stream=f"cv/chain/{variant}"
        )

        totals = np.zeros(4)
        n_holdout = 0
        for city, design, train, fit in fitted:
            test = ~train
            log_mean = predict_log_mean(fit, design, sample.theta_mean(city.city_id), bases, test)
            y = stack_response(design.frame.loc[test])
            frame = design.frame
            ozone_cut = np.quantile(frame["ozone"], self.cv.tail_quantile)
            temp_cut = np.quantile(frame["temp"], self.cv.tail_quantile)
            held = frame.loc[test]
            ozone_tail = np.tile(held["ozone"].to_numpy() > ozone_cut, len(AGE_GROUPS))
            temp_tail = np.tile(held["temp"].to_numpy() > temp_cut, len(AGE_GROUPS))
            y_hat = np.exp(log_mean)
            for i, subset in enumerate((slice(None), ozone_tail, temp_tail, ozone_tail & temp_tail)):
                totals[i] += holdout_deviance(y_hat[subset], y[subset])
            n_holdout += int(test.sum())
        logger.info(f"Cross-validation {variant}: holdout deviance {totals[0]:.2f} over {n_holdout} days")
        return CvModelResult(
            variant=variant,
            overall=float(totals[0]),
            ozone_tail=float(totals[1]),
            temp_tail=float(totals[2]),
            both_tails=float(totals[3]),
            n_holdout=n_holdout,
            n_cities=len(fitted),
            skipped=skipped,
        )

    def run(self, cities: Sequence[CityData], variants: Optional[Sequence[str]] = None) -> CvReport:
        variants = list(variants or MODEL_VARIANTS)
        show = settings.PROGRESS and len(variants) > 1
        results = [self.run_variant(cities, v) for v in tqdm(variants, desc="cv", disable=not show, leave=False)]
        return CvReport(fraction=self.cv.fraction, seed=self.cv.seed, contiguous=self.cv.contiguous, results=results)


def run_cv(cities: Sequence[CityData], model_variant: str, config: RunConfig) -> CvReport:
    return CvService(config).run(cities, [model_variant])
