"""
Confounder design g(Z) = Z gamma: age intercepts, day of week, per-age smooth
functions of calendar time and natural splines of the weather covariates.

Rows are stacked age-major: every analysed day for the under-65 group, then
65-74, then 75+, the same layout as the stacked mortality response.
"""

import logging
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.interpolate import CubicSpline

from ..core.exceptions import ConfigurationError, InsufficientDataError, RankDeficiencyError
from ..models.city import COUNT_COLUMNS, CityData
from ..schemas.pydantic.config import ConfounderConfig
from ..schemas.types import NDArray
from .glm import find_aliased_columns

logger = logging.getLogger(__name__)

AGE_GROUPS: tuple[str, ...] = ("u65", "65_74", "75p")
WEEKDAYS: tuple[str, ...] = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")
OZONE_SEASON_MONTHS: tuple[int, ...] = (4, 5, 6, 7, 8, 9, 10)
DAYS_PER_YEAR = 365.25


class NaturalSpline(BaseModel):
    """
    Natural cubic spline basis with knots at empirical quantiles. Columns are
    the cardinal (Lagrange) splines of the knots without the first one, so the
    basis spans the natural splines modulo the constant; linear beyond the
    boundary knots.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    knots: NDArray

    @classmethod
    def from_data(cls, x: np.ndarray, df: int, name: str = "x") -> "NaturalSpline":
        if df < 1:
            raise ConfigurationError(key=f"{name} df", message=f"spline df must be positive, got {df}")
        x = np.asarray(x, dtype=np.float64)
        x = x[np.isfinite(x)]
        if np.unique(x).size < df + 1:
            raise ConfigurationError(
                key=f"{name} df",
                message=f"{name}: {df} df needs at least {df + 1} distinct values, found {np.unique(x).size}.",
            )
        knots = np.quantile(x, np.linspace(0.0, 1.0, df + 1))
        if np.any(np.diff(knots) <= 0):
            raise ConfigurationError(
                key=f"{name} df", message=f"{name}: quantile knots are tied; reduce df to {df - 1} or fewer."
            )
        return cls(knots=knots)

    @property
    def df(self) -> int:
        return self.knots.shape[0] - 1

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        k = self.knots.shape[0]
        spline = CubicSpline(self.knots, np.eye(k), bc_type="natural", axis=0)
        out = spline(np.clip(x, self.knots[0], self.knots[-1]))
        below = x < self.knots[0]
        above = x > self.knots[-1]
        if np.any(below) or np.any(above):
            slope = spline.derivative(1)
            out[below] += (x[below] - self.knots[0])[:, None] * slope(self.knots[0])[None, :]
            out[above] += (x[above] - self.knots[-1])[:, None] * slope(self.knots[-1])[None, :]
        return out[:, 1:]


def natural_cubic_spline_basis(x: np.ndarray, df: int) -> np.ndarray:
    """(n, df) natural cubic spline basis of ``x`` with quantile knots."""
    return NaturalSpline.from_data(x, df).evaluate(x)


def running_mean(x, window: int) -> np.ndarray:
    """Trailing mean over days t - window + 1 .. t, averaging the available days."""
    if window < 1:
        raise ConfigurationError(key="running_mean_window", message="window must be at least 1")
    series = pd.Series(np.asarray(x, dtype=np.float64))
    return series.rolling(window, min_periods=1).mean().to_numpy()


def stack_response(frame: pd.DataFrame) -> np.ndarray:
    """Deaths stacked age-major, matching the design row layout."""
    return np.concatenate([frame[column].to_numpy(dtype=np.float64) for column in COUNT_COLUMNS])


def analysis_frame(city: CityData, cfg: ConfounderConfig) -> pd.DataFrame:
    """
    Analysed days of a city: running means are taken on the full calendar
    (gaps count as missing days), then the ozone season is applied and
    incomplete rows are dropped.
    """
    frame = city.frame.set_index("date")
    if frame.empty:
        raise InsufficientDataError(city.city_id, f"City {city.city_id} has no rows.")
    calendar = frame.reindex(pd.date_range(frame.index[0], frame.index[-1], freq="D"))
    calendar["temp_rm"] = running_mean(calendar["temp"], cfg.running_mean_window)
    calendar["dewpoint_rm"] = running_mean(calendar["dewpoint"], cfg.running_mean_window)
    out = calendar.loc[frame.index]
    if cfg.ozone_season:
        out = out[out.index.month.isin(OZONE_SEASON_MONTHS)]
    before = out.shape[0]
    out = out.dropna()
    dropped = before - out.shape[0]
    if dropped:
        logger.info(f"[city {city.city_id}] dropped {dropped} of {before} days with missing values")
    out = out.rename_axis("date").reset_index()
    return out


def time_spline_df(dates: pd.Series, cfg: ConfounderConfig) -> int:
    dates = pd.to_datetime(dates)
    years = ((dates.max() - dates.min()).days + 1) / DAYS_PER_YEAR
    return max(int(round(cfg.time_df_per_year * years)), cfg.min_time_df)


class ConfounderDesign(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: NDArray
    column_labels: list[str]
    df_map: dict[str, int] = Field(default_factory=dict)
    frame: pd.DataFrame

    @property
    def n_days(self) -> int:
        return int(self.frame.shape[0])

    def drop_columns(self, labels: Sequence[str]) -> "ConfounderDesign":
        keep = [i for i, label in enumerate(self.column_labels) if label not in set(labels)]
        return ConfounderDesign(
            matrix=self.matrix[:, keep],
            column_labels=[self.column_labels[i] for i in keep],
            df_map=self.df_map,
            frame=self.frame,
        )

    def take_days(self, day_mask: np.ndarray) -> "ConfounderDesign":
        """Restrict to the days selected by a boolean mask, in every age block."""
        day_mask = np.asarray(day_mask, dtype=bool)
        rows = np.tile(day_mask, len(AGE_GROUPS))
        return ConfounderDesign(
            matrix=self.matrix[rows],
            column_labels=self.column_labels,
            df_map=self.df_map,
            frame=self.frame.loc[day_mask].reset_index(drop=True),
        )


def build_confounder_design(
    city: CityData, cfg: ConfounderConfig, frame: Optional[pd.DataFrame] = None
) -> ConfounderDesign:
    """
    Assemble Z for a city. ``frame`` is the output of ``analysis_frame`` and is
    computed when omitted.
    """
    if frame is None:
        frame = analysis_frame(city, cfg)
    n = frame.shape[0]
    n_age = len(AGE_GROUPS)
    if n == 0:
        raise InsufficientDataError(city.city_id, f"City {city.city_id} has no complete analysed days.")

    blocks: list[np.ndarray] = []
    labels: list[str] = []
    df_map: dict[str, int] = {}

    intercepts = np.kron(np.eye(n_age), np.ones((n, 1)))
    blocks.append(intercepts)
    labels += [f"age_{age}" for age in AGE_GROUPS]
    df_map["age"] = n_age

    weekday = pd.to_datetime(frame["date"]).dt.dayofweek.to_numpy()
    levels = [day for day in WEEKDAYS if day != cfg.reference_day]
    dow = np.column_stack([(weekday == WEEKDAYS.index(day)).astype(np.float64) for day in levels])
    blocks.append(np.tile(dow, (n_age, 1)))
    labels += [f"dow_{day}" for day in levels]
    df_map["dow"] = len(levels)

    time_df = time_spline_df(frame["date"], cfg)
    ordinal = pd.to_datetime(frame["date"]).map(pd.Timestamp.toordinal).to_numpy(dtype=np.float64)
    time_basis = NaturalSpline.from_data(ordinal, time_df, name="time").evaluate(ordinal)
    for a, age in enumerate(AGE_GROUPS):
        indicator = np.zeros((n_age, 1))
        indicator[a] = 1.0
        blocks.append(np.kron(indicator, time_basis))
        labels += [f"time_{age}_ns{i}" for i in range(1, time_df + 1)]
        df_map[f"time_{age}"] = time_df

    weather = [
        ("temp_rm", cfg.temp_running_mean_df),
        ("dewpoint", cfg.dewpoint_df),
        ("dewpoint_rm", cfg.dewpoint_running_mean_df),
    ]
    if cfg.same_day_temp_df is not None:
        weather.append(("temp", cfg.same_day_temp_df))
    for column, df in weather:
        values = frame[column].to_numpy(dtype=np.float64)
        basis = NaturalSpline.from_data(values, df, name=column).evaluate(values)
        blocks.append(np.tile(basis, (n_age, 1)))
        labels += [f"{column}_ns{i}" for i in range(1, df + 1)]
        df_map[column] = df

    matrix = np.hstack(blocks)
    if matrix.shape[0] <= matrix.shape[1]:
        raise InsufficientDataError(
            city.city_id, f"City {city.city_id}: {n} days cannot support {matrix.shape[1]} confounder columns."
        )
    aliased = find_aliased_columns(matrix, labels)
    if aliased:
        raise RankDeficiencyError(aliased, city.city_id)
    logger.debug(f"[city {city.city_id}] confounder design {matrix.shape[0]} x {matrix.shape[1]}, time df {time_df}")
    return ConfounderDesign(matrix=matrix, column_labels=labels, df_map=df_map, frame=frame)
