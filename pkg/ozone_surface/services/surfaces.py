"""
Post-fit summaries of the posterior draws.

Log RR is the ozone derivative of the surface per ppb, reported as percent
change in mortality per 10 ppb (x 1000). The interaction surface is the
cross-derivative on the same scale, per degree F. Every summary is computed
per draw first and summarized across draws, so national and regional pooling
happens at the draw level.
"""

import logging
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from ..core.exceptions import ConfigurationError, InsufficientDataError
from ..models.posterior import PosteriorSample
from ..models.stage1 import Stage1Fit
from ..schemas.types import NDArray
from .basis import in_domain, tensor_design, theta_to_psi

logger = logging.getLogger(__name__)

# derivative per ppb -> percent per 10 ppb
LOG_RR_SCALE = 1000.0
HIGH_TEMP_WINDOW = (0.95, 0.99)
MODERATE_TEMP_WINDOW = (0.50, 0.75)
OZONE_TRIM = (0.10, 0.90)
TEMPERATURE_PERCENTILES = (0.50, 0.75, 0.95, 0.99)


class EffectSummary(BaseModel):
    mean: float
    sd: float
    lower: float
    upper: float
    threshold: float = 0.0
    pr_above: float
    n_draws: int

    @classmethod
    def from_draws(cls, draws: np.ndarray, threshold: float = 0.0) -> "EffectSummary":
        draws = np.asarray(draws, dtype=np.float64)
        draws = draws[np.isfinite(draws)]
        if draws.size == 0:
            nan = float("nan")
            return cls(mean=nan, sd=nan, lower=nan, upper=nan, threshold=threshold, pr_above=nan, n_draws=0)
        lower, upper = np.quantile(draws, [0.025, 0.975])
        return cls(
            mean=float(draws.mean()),
            sd=float(draws.std()),
            lower=float(lower),
            upper=float(upper),
            threshold=threshold,
            pr_above=float(np.mean(draws > threshold)),
            n_draws=int(draws.size),
        )


class SurfaceGrid(BaseModel):
    """
    Per-draw values on an ozone x temperature grid. ``draws`` has shape
    (draws, temp points, ozone points) and is NaN where ``support_mask`` is
    false.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    label: str
    kind: str = "log_rr"
    ozone_grid: NDArray
    temp_grid: NDArray
    draws: NDArray
    support_mask: np.ndarray
    n_supporting: Optional[np.ndarray] = None

    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)

    def sd(self) -> np.ndarray:
        return self.draws.std(axis=0)

    def quantile(self, q: float) -> np.ndarray:
        return np.quantile(self.draws, q, axis=0)

    def pr_gt0(self) -> np.ndarray:
        prob = np.mean(self.draws > 0, axis=0)
        return np.where(self.support_mask, prob, np.nan)

    def summary_frame(self) -> pd.DataFrame:
        temp, ozone = np.meshgrid(self.temp_grid, self.ozone_grid, indexing="ij")
        frame = pd.DataFrame(
            {
                "ozone": ozone.ravel(),
                "temp": temp.ravel(),
                "mean": self.mean().ravel(),
                "sd": self.sd().ravel(),
                "q2.5": self.quantile(0.025).ravel(),
                "q97.5": self.quantile(0.975).ravel(),
                "pr_gt0": self.pr_gt0().ravel(),
                "supported": self.support_mask.ravel(),
            }
        )
        if self.n_supporting is not None:
            frame["n_cities"] = self.n_supporting.ravel()
        return frame


def observed_support(fit: Stage1Fit) -> tuple[tuple[float, float], tuple[float, float]]:
    return (
        (float(fit.ozone_obs.min()), float(fit.ozone_obs.max())),
        (float(fit.temp_obs.min()), float(fit.temp_obs.max())),
    )


def city_grid(fit: Stage1Fit, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Evenly spaced grid over the city's observed rectangle."""
    (o_lo, o_hi), (t_lo, t_hi) = observed_support(fit)
    return np.linspace(o_lo, o_hi, size), np.linspace(t_lo, t_hi, size)


def national_grid(sample: PosteriorSample, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Evenly spaced grid over the union of city rectangles (the global basis domain)."""
    ozone_basis, temp_basis = sample.bases
    return np.linspace(ozone_basis.lo, ozone_basis.hi, size), np.linspace(temp_basis.lo, temp_basis.hi, size)


def _psi_draws(sample: PosteriorSample, city_id: str) -> np.ndarray:
    m1, m2 = sample.orders
    return theta_to_psi(sample.city_theta(city_id), m1, m2)


def point_draws(
    sample: PosteriorSample,
    city_id: str,
    ozone: np.ndarray,
    temp: np.ndarray,
    d_ozone: bool = True,
    d_temp: bool = False,
    scale: float = LOG_RR_SCALE,
) -> np.ndarray:
    """(draws, points) values of the surface or its derivatives at paired points."""
    ozone_basis, temp_basis = sample.bases
    design = tensor_design(ozone_basis, temp_basis, np.asarray(ozone), np.asarray(temp), d_ozone, d_temp)
    return scale * (_psi_draws(sample, city_id) @ design.T)


def _surface_grid(
    sample: PosteriorSample,
    fit: Stage1Fit,
    ozone_grid: Optional[np.ndarray],
    temp_grid: Optional[np.ndarray],
    grid_size: int,
    d_temp: bool,
    kind: str,
) -> SurfaceGrid:
    if ozone_grid is None or temp_grid is None:
        default_ozone, default_temp = city_grid(fit, grid_size)
        ozone_grid = default_ozone if ozone_grid is None else ozone_grid
        temp_grid = default_temp if temp_grid is None else temp_grid
    ozone_grid = np.asarray(ozone_grid, dtype=np.float64)
    temp_grid = np.asarray(temp_grid, dtype=np.float64)
    temp, ozone = np.meshgrid(temp_grid, ozone_grid, indexing="ij")
    (o_lo, o_hi), (t_lo, t_hi) = observed_support(fit)
    ozone_basis, temp_basis = sample.bases
    support = (
        (ozone >= o_lo) & (ozone <= o_hi) & (temp >= t_lo) & (temp <= t_hi)
        & in_domain(ozone_basis, ozone) & in_domain(temp_basis, temp)
    )
    draws = np.full((sample.n_draws,) + support.shape, np.nan)
    if np.any(support):
        draws[:, support] = point_draws(sample, fit.city_id, ozone[support], temp[support], True, d_temp)
    return SurfaceGrid(
        label=fit.city_id, kind=kind, ozone_grid=ozone_grid, temp_grid=temp_grid, draws=draws, support_mask=support
    )


def log_rr_surface(
    sample: PosteriorSample,
    fit: Stage1Fit,
    ozone_grid: Optional[np.ndarray] = None,
    temp_grid: Optional[np.ndarray] = None,
    grid_size: int = 101,
) -> SurfaceGrid:
    """Log RR draws on a grid; points outside the city's observed rectangle are masked."""
    return _surface_grid(sample, fit, ozone_grid, temp_grid, grid_size, d_temp=False, kind="log_rr")


def interaction_surface(
    sample: PosteriorSample,
    fit: Stage1Fit,
    ozone_grid: Optional[np.ndarray] = None,
    temp_grid: Optional[np.ndarray] = None,
    grid_size: int = 101,
) -> SurfaceGrid:
    return _surface_grid(sample, fit, ozone_grid, temp_grid, grid_size, d_temp=True, kind="interaction")


def precision_weights(variances: np.ndarray) -> np.ndarray:
    """
    Inverse-variance weights along axis 0, summing to one. Members with zero
    variance share the weight equally; NaN variances get no weight.
    """
    variances = np.asarray(variances, dtype=np.float64)
    valid = np.isfinite(variances)
    zero = valid & (variances <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        inverse = np.where(valid & ~zero, 1.0 / np.where(valid & ~zero, variances, 1.0), 0.0)
    any_zero = zero.any(axis=0)
    raw = np.where(any_zero, zero.astype(np.float64), inverse)
    total = raw.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(total > 0, raw / np.where(total > 0, total, 1.0), np.nan)


def precision_pool(draws: np.ndarray) -> np.ndarray:
    """Pool (members, draws, ...) draw arrays by inverse posterior variance; NaN members are skipped."""
    draws = np.asarray(draws, dtype=np.float64)
    weights = precision_weights(draws.var(axis=1))
    present = np.isfinite(draws)
    pooled = np.sum(np.where(present, draws, 0.0) * np.nan_to_num(weights)[:, None], axis=0)
    covered = np.isfinite(weights).any(axis=0) & (np.nan_to_num(weights).sum(axis=0) > 0)
    return np.where(covered[None, ...], pooled, np.nan)


class NationalAccumulator:
    """
    Streams city grids into a precision-weighted national grid without keeping
    every city's draws in memory.
    """

    def __init__(self, min_support: int = 1):
        self.min_support = min_support
        self._weighted = None
        self._weights = None
        self._zero_sum = None
        self._zero_count = None
        self._count = None
        self._template: Optional[SurfaceGrid] = None

    def add(self, grid: SurfaceGrid) -> None:
        if self._template is None:
            self._template = grid
            shape = grid.draws.shape
            self._weighted = np.zeros(shape)
            self._zero_sum = np.zeros(shape)
            self._weights = np.zeros(shape[1:])
            self._zero_count = np.zeros(shape[1:])
            self._count = np.zeros(shape[1:], dtype=np.int64)
        elif grid.draws.shape != self._weighted.shape:
            raise ConfigurationError(
                key="grid_size", message="National pooling needs every city on the same grid and draw count."
            )
        var = grid.draws.var(axis=0)
        supported = grid.support_mask & np.isfinite(var)
        zero = supported & (var <= 0)
        positive = supported & ~zero
        weight = np.where(positive, 1.0 / np.where(positive, var, 1.0), 0.0)
        values = np.where(supported[None], grid.draws, 0.0)
        self._weighted += weight[None] * values
        self._weights += weight
        self._zero_sum += np.where(zero[None], values, 0.0)
        self._zero_count += zero
        self._count += supported

    def result(self, label: str = "national") -> SurfaceGrid:
        if self._template is None:
            raise InsufficientDataError(message="No city grids to pool.")
        with np.errstate(divide="ignore", invalid="ignore"):
            pooled = np.where(
                (self._zero_count > 0)[None],
                self._zero_sum / np.where(self._zero_count > 0, self._zero_count, 1.0)[None],
                self._weighted / np.where(self._weights > 0, self._weights, 1.0)[None],
            )
        support = self._count >= self.min_support
        pooled[:, ~support] = np.nan
        return SurfaceGrid(
            label=label,
            kind=self._template.kind,
            ozone_grid=self._template.ozone_grid,
            temp_grid=self._template.temp_grid,
            draws=pooled,
            support_mask=support,
            n_supporting=self._count.copy(),
        )


def national_surface(per_city: Iterable[SurfaceGrid], min_support: int = 1, label: str = "national") -> SurfaceGrid:
    """Pointwise precision-weighted average over the cities supporting each point."""
    accumulator = NationalAccumulator(min_support)
    for grid in per_city:
        accumulator.add(grid)
    return accumulator.result(label)


def city_average_effect(sample: PosteriorSample, fit: Stage1Fit) -> tuple[EffectSummary, np.ndarray]:
    """Log RR averaged over the city's observed days, per draw."""
    draws = point_draws(sample, fit.city_id, fit.ozone_obs, fit.temp_obs).mean(axis=1)
    return EffectSummary.from_draws(draws), draws


def log_rr_cross_section(
    sample: PosteriorSample,
    fits: Sequence[Stage1Fit],
    ozone_levels: Sequence[float] = (50.0, 100.0),
    temp_grid: Optional[np.ndarray] = None,
    grid_size: int = 101,
    min_support: int = 5,
) -> pd.DataFrame:
    """National log RR at fixed ozone levels as a function of temperature."""
    if temp_grid is None:
        temp_grid = national_grid(sample, grid_size)[1]
    ozone_grid = np.asarray(ozone_levels, dtype=np.float64)
    grids = (log_rr_surface(sample, fit, ozone_grid, temp_grid) for fit in fits)
    national = national_surface(grids, min_support=min_support)
    frame = national.summary_frame()
    return frame.loc[:, ["ozone", "temp", "mean", "q2.5", "q97.5", "pr_gt0", "n_cities"]]


def temperature_percentile_sections(
    sample: PosteriorSample,
    fits: Sequence[Stage1Fit],
    ozone_grid: Optional[np.ndarray] = None,
    percentiles: Sequence[float] = TEMPERATURE_PERCENTILES,
    grid_size: int = 101,
    min_support: int = 5,
) -> pd.DataFrame:
    """
    National log RR as a function of ozone with temperature held at each city's
    own percentiles, plus the pointwise probability that log RR at each
    percentile exceeds log RR at the first (median) one.
    """
    if ozone_grid is None:
        ozone_grid = national_grid(sample, grid_size)[0]
    ozone_grid = np.asarray(ozone_grid, dtype=np.float64)
    accumulator = NationalAccumulator(min_support)
    for fit in fits:
        temps = np.quantile(fit.temp_obs, percentiles)
        grid = log_rr_surface(sample, fit, ozone_grid, temps)
        accumulator.add(grid)
    national = accumulator.result()
    baseline = national.draws[:, 0, :]
    rows = []
    for i, pct in enumerate(percentiles):
        values = national.draws[:, i, :]
        exceed = np.mean(values > baseline, axis=0)
        for o, ozone in enumerate(ozone_grid):
            supported = bool(national.support_mask[i, o])
            column = values[:, o]
            rows.append(
                {
                    "temp_percentile": 100.0 * pct,
                    "ozone": ozone,
                    "mean": float(column.mean()) if supported else np.nan,
                    "q2.5": float(np.quantile(column, 0.025)) if supported else np.nan,
                    "q97.5": float(np.quantile(column, 0.975)) if supported else np.nan,
                    "pr_gt_median": float(exceed[o]) if supported and i > 0 else np.nan,
                    "n_cities": int(national.n_supporting[i, o]),
                }
            )
    return pd.DataFrame(rows)


# -- stratified temperature comparison ------------------------------------


class StratifiedComparison(BaseModel):
    """
    Mean log RR on high-temperature days (95th-99th percentile) against
    moderate days (50th-75th), with ozone trimmed to the 10th-90th percentile
    inside each window, over the observed and over the common ozone range.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    city_id: str
    region: str = "unknown"
    high_temp_window: tuple[float, float]
    moderate_temp_window: tuple[float, float]
    high_ozone_trim: tuple[float, float]
    moderate_ozone_trim: tuple[float, float]
    common_ozone_range: Optional[tuple[float, float]] = None
    ratio_observed: EffectSummary
    ratio_common: Optional[EffectSummary] = None
    high_observed: NDArray = Field(exclude=True)
    moderate_observed: NDArray = Field(exclude=True)
    high_common: Optional[NDArray] = Field(None, exclude=True)
    moderate_common: Optional[NDArray] = Field(None, exclude=True)

    def as_row(self) -> dict:
        common = self.common_ozone_range
        return {
            "city_id": self.city_id,
            "region": self.region,
            "high_temp_lo": self.high_temp_window[0],
            "high_temp_hi": self.high_temp_window[1],
            "moderate_temp_lo": self.moderate_temp_window[0],
            "moderate_temp_hi": self.moderate_temp_window[1],
            "common_ozone_lo": common[0] if common else np.nan,
            "common_ozone_hi": common[1] if common else np.nan,
            "high_observed_mean": float(self.high_observed.mean()),
            "moderate_observed_mean": float(self.moderate_observed.mean()),
            "ratio_observed_mean": self.ratio_observed.mean,
            "ratio_observed_q2.5": self.ratio_observed.lower,
            "ratio_observed_q97.5": self.ratio_observed.upper,
            "ratio_observed_pr_gt1": self.ratio_observed.pr_above,
            "ratio_common_mean": self.ratio_common.mean if self.ratio_common else np.nan,
            "ratio_common_q2.5": self.ratio_common.lower if self.ratio_common else np.nan,
            "ratio_common_q97.5": self.ratio_common.upper if self.ratio_common else np.nan,
            "ratio_common_pr_gt1": self.ratio_common.pr_above if self.ratio_common else np.nan,
        }


def ratio_draws(values: np.ndarray, high_mask: np.ndarray, moderate_mask: np.ndarray, label: str = "") -> np.ndarray:
    """
    Per-draw ratio of the mean of ``values`` (draws, days) over the high days
    to the mean over the moderate days. Non-finite ratios are dropped.
    """
    high = values[:, high_mask].mean(axis=1)
    moderate = values[:, moderate_mask].mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = high / moderate
    finite = np.isfinite(ratio)
    if not finite.all():
        logger.warning(f"[city {label}] {int((~finite).sum())} draws with an undefined temperature ratio excluded")
    return ratio[finite]


def _trim(ozone: np.ndarray, window: np.ndarray) -> tuple[np.ndarray, tuple[float, float]]:
    lo, hi = np.quantile(ozone[window], OZONE_TRIM)
    return window & (ozone >= lo) & (ozone <= hi), (float(lo), float(hi))


def _window(temp: np.ndarray, bounds: tuple[float, float]) -> tuple[np.ndarray, tuple[float, float]]:
    lo, hi = np.quantile(temp, bounds)
    return (temp >= lo) & (temp <= hi), (float(lo), float(hi))


def stratified_ratio(sample: PosteriorSample, fit: Stage1Fit) -> StratifiedComparison:
    ozone, temp = fit.ozone_obs, fit.temp_obs
    high, high_window = _window(temp, HIGH_TEMP_WINDOW)
    moderate, moderate_window = _window(temp, MODERATE_TEMP_WINDOW)
    if not high.any() or not moderate.any():
        raise InsufficientDataError(fit.city_id, f"City {fit.city_id} has an empty temperature window.")
    high, high_trim = _trim(ozone, high)
    moderate, moderate_trim = _trim(ozone, moderate)
    values = point_draws(sample, fit.city_id, ozone, temp)

    common = (max(high_trim[0], moderate_trim[0]), min(high_trim[1], moderate_trim[1]))
    high_common = high & (ozone >= common[0]) & (ozone <= common[1])
    moderate_common = moderate & (ozone >= common[0]) & (ozone <= common[1])
    has_common = common[0] <= common[1] and high_common.any() and moderate_common.any()
    if not has_common:
        logger.info(f"[city {fit.city_id}] no common ozone range between the temperature windows")

    return StratifiedComparison(
        city_id=fit.city_id,
        region=fit.region,
        high_temp_window=high_window,
        moderate_temp_window=moderate_window,
        high_ozone_trim=high_trim,
        moderate_ozone_trim=moderate_trim,
        common_ozone_range=common if has_common else None,
        ratio_observed=EffectSummary.from_draws(ratio_draws(values, high, moderate, fit.city_id), threshold=1.0),
        ratio_common=(
            EffectSummary.from_draws(ratio_draws(values, high_common, moderate_common, fit.city_id), threshold=1.0)
            if has_common
            else None
        ),
        high_observed=values[:, high].mean(axis=1),
        moderate_observed=values[:, moderate].mean(axis=1),
        high_common=values[:, high_common].mean(axis=1) if has_common else None,
        moderate_common=values[:, moderate_common].mean(axis=1) if has_common else None,
    )


def _pooled_ratio(high: list[np.ndarray], moderate: list[np.ndarray]) -> Optional[EffectSummary]:
    if not high:
        return None
    pooled_high = precision_pool(np.stack(high))
    pooled_moderate = precision_pool(np.stack(moderate))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = pooled_high / pooled_moderate
    return EffectSummary.from_draws(ratio, threshold=1.0)


def stratified_table(comparisons: Sequence[StratifiedComparison]) -> pd.DataFrame:
    """
    Regional and national mean log RR on high and moderate temperature days,
    pooled at the draw level; cities without a common range drop out of the
    common-range columns.
    """
    groups: dict[str, list[StratifiedComparison]] = {}
    for comparison in comparisons:
        groups.setdefault(comparison.region, []).append(comparison)
    groups = dict(sorted(groups.items()))
    groups["national"] = list(comparisons)

    rows = []
    for name, members in groups.items():
        high_obs = precision_pool(np.stack([m.high_observed for m in members]))
        moderate_obs = precision_pool(np.stack([m.moderate_observed for m in members]))
        with_common = [m for m in members if m.high_common is not None]
        observed = _pooled_ratio([m.high_observed for m in members], [m.moderate_observed for m in members])
        common = _pooled_ratio([m.high_common for m in with_common], [m.moderate_common for m in with_common])
        high_common = precision_pool(np.stack([m.high_common for m in with_common])) if with_common else None
        moderate_common = precision_pool(np.stack([m.moderate_common for m in with_common])) if with_common else None
        rows.append(
            {
                "group": name,
                "n_cities": len(members),
                "high_observed_mean": float(np.mean(high_obs)),
                "high_observed_sd": float(np.std(high_obs)),
                "moderate_observed_mean": float(np.mean(moderate_obs)),
                "moderate_observed_sd": float(np.std(moderate_obs)),
                "ratio_observed_mean": observed.mean,
                "n_cities_common": len(with_common),
                "high_common_mean": float(np.mean(high_common)) if high_common is not None else np.nan,
                "high_common_sd": float(np.std(high_common)) if high_common is not None else np.nan,
                "moderate_common_mean": float(np.mean(moderate_common)) if moderate_common is not None else np.nan,
                "moderate_common_sd": float(np.std(moderate_common)) if moderate_common is not None else np.nan,
                "ratio_common_mean": common.mean if common else np.nan,
            }
        )
    return pd.DataFrame(rows)


# -- excess mortality -----------------------------------------------------


class ExcessMortality(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    city_id: str
    region: str = "unknown"
    from_point: tuple[float, float]
    to_point: tuple[float, float]
    summary: EffectSummary
    draws: NDArray = Field(exclude=True)


def excess_mortality(
    sample: PosteriorSample,
    fit: Stage1Fit,
    from_quantile: float = 0.50,
    to_quantile: float = 0.95,
    vary_temp: bool = True,
) -> ExcessMortality:
    """
    Percent increase in mortality moving from the (ozone, temp) medians to the
    95th percentiles: 100 (exp(f(to) - f(from)) - 1) per draw. With
    ``vary_temp=False`` temperature stays at its median.
    """
    o_from, o_to = np.quantile(fit.ozone_obs, [from_quantile, to_quantile])
    t_from, t_to = np.quantile(fit.temp_obs, [from_quantile, to_quantile])
    if not vary_temp:
        t_to = t_from
    values = point_draws(
        sample, fit.city_id, np.array([o_from, o_to]), np.array([t_from, t_to]), d_ozone=False, scale=1.0
    )
    draws = 100.0 * np.expm1(values[:, 1] - values[:, 0])
    return ExcessMortality(
        city_id=fit.city_id,
        region=fit.region,
        from_point=(float(o_from), float(t_from)),
        to_point=(float(o_to), float(t_to)),
        summary=EffectSummary.from_draws(draws),
        draws=draws,
    )


def excess_mortality_table(results: Sequence[ExcessMortality]) -> pd.DataFrame:
    """Per-city rows, then precision-pooled regional and national rows."""
    rows = [
        {"group": r.city_id, "level": "city", "mean": r.summary.mean, "sd": r.summary.sd,
         "q2.5": r.summary.lower, "q97.5": r.summary.upper}
        for r in results
    ]
    groups: dict[str, list[ExcessMortality]] = {}
    for r in results:
        groups.setdefault(r.region, []).append(r)
    pooled_groups = [(name, "region", members) for name, members in sorted(groups.items())]
    pooled_groups.append(("national", "national", list(results)))
    for name, level, members in pooled_groups:
        summary = EffectSummary.from_draws(precision_pool(np.stack([m.draws for m in members])))
        rows.append(
            {"group": name, "level": level, "mean": summary.mean, "sd": summary.sd,
             "q2.5": summary.lower, "q97.5": summary.upper}
        )
    return pd.DataFrame(rows)
