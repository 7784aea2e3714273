"""
CSV ingestion and export of city series, the ozone-season filter and
great-circle distances.

Input layout: ``metadata.csv`` (city_id, lat, lon, region, population) plus one
``<city_id>.csv`` per city (date, deaths_u65, deaths_65_74, deaths_75p, ozone,
temp, dewpoint). Dates are ISO ``YYYY-MM-DD``; an empty cell is a missing value.
"""

import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from ..core.exceptions import SchemaError
from ..models.city import (
    CITY_COLUMNS,
    COUNT_COLUMNS,
    COVARIATE_COLUMNS,
    METADATA_COLUMNS,
    CityData,
    IngestionReport,
)
from .confounders import OZONE_SEASON_MONTHS

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
METADATA_FILE = "metadata.csv"


def _read_text_csv(path: Path) -> pd.DataFrame:
    if not path.is_file():
        raise SchemaError(str(path), message="file not found")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise SchemaError(str(path), message=f"unreadable CSV ({exc})")


def _check_columns(path: Path, frame: pd.DataFrame, expected: Sequence[str]) -> None:
    missing = [c for c in expected if c not in frame.columns]
    if missing:
        raise SchemaError(str(path), 1, f"missing columns: {', '.join(missing)}")


def _line(row: int) -> int:
    # header is line 1
    return int(row) + 2


def _numeric(path: Path, frame: pd.DataFrame, column: str, required: bool = False) -> np.ndarray:
    raw = frame[column].str.strip()
    values = pd.to_numeric(raw.where(raw != ""), errors="coerce").to_numpy(dtype=np.float64)
    bad = (raw != "").to_numpy() & np.isnan(values)
    if required:
        bad |= (raw == "").to_numpy()
    if np.any(bad):
        row = int(np.flatnonzero(bad)[0])
        raise SchemaError(str(path), _line(row), f"{column}: invalid value '{frame[column].iloc[row]}'")
    return values


def _read_metadata(directory: Path) -> pd.DataFrame:
    path = directory / METADATA_FILE
    frame = _read_text_csv(path)
    _check_columns(path, frame, METADATA_COLUMNS)
    city_ids = frame["city_id"].str.strip()
    if (city_ids == "").any():
        raise SchemaError(str(path), _line(np.flatnonzero(city_ids == "")[0]), "empty city_id")
    duplicated = city_ids.duplicated()
    if duplicated.any():
        row = int(np.flatnonzero(duplicated)[0])
        raise SchemaError(str(path), _line(row), f"duplicate city_id '{city_ids.iloc[row]}'")
    lat = _numeric(path, frame, "lat", required=True)
    lon = _numeric(path, frame, "lon", required=True)
    population = _numeric(path, frame, "population", required=True)
    for name, values, lo, hi in (("lat", lat, -90, 90), ("lon", lon, -180, 180)):
        bad = (values < lo) | (values > hi)
        if np.any(bad):
            raise SchemaError(str(path), _line(np.flatnonzero(bad)[0]), f"{name} outside [{lo}, {hi}]")
    bad = (population <= 0) | (population != np.round(population))
    if np.any(bad):
        raise SchemaError(str(path), _line(np.flatnonzero(bad)[0]), "population must be a positive integer")
    region = frame["region"].str.strip().replace("", "unknown")
    return pd.DataFrame(
        {"city_id": city_ids, "lat": lat, "lon": lon, "region": region, "population": population.astype(np.int64)}
    )


def _read_city(path: Path, city_id: str) -> tuple[pd.DataFrame, IngestionReport]:
    raw = _read_text_csv(path)
    _check_columns(path, raw, CITY_COLUMNS)

    text = raw["date"].str.strip()
    dates = pd.to_datetime(text, format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        row = int(np.flatnonzero(dates.isna().to_numpy())[0])
        raise SchemaError(str(path), _line(row), f"date: invalid value '{raw['date'].iloc[row]}'")
    duplicated = dates.duplicated()
    if duplicated.any():
        row = int(np.flatnonzero(duplicated.to_numpy())[0])
        raise SchemaError(str(path), _line(row), f"duplicate date {text.iloc[row]}")
    decreasing = dates.diff().dt.days.to_numpy() < 0
    if np.any(decreasing):
        row = int(np.flatnonzero(decreasing)[0])
        raise SchemaError(str(path), _line(row), f"dates must be strictly increasing ({text.iloc[row]})")

    frame = pd.DataFrame({"date": dates})
    for column in COUNT_COLUMNS:
        values = _numeric(path, raw, column)
        bad = ~np.isnan(values) & ((values < 0) | (values != np.round(values)))
        if np.any(bad):
            row = int(np.flatnonzero(bad)[0])
            raise SchemaError(
                str(path), _line(row), f"{column}: death counts must be nonnegative integers, got {raw[column].iloc[row]}"
            )
        frame[column] = values
    for column in COVARIATE_COLUMNS:
        frame[column] = _numeric(path, raw, column)

    missing = {column: int(frame[column].isna().sum()) for column in CITY_COLUMNS[1:]}
    report = IngestionReport(
        city_id=city_id,
        rows_read=int(frame.shape[0]),
        rows_dropped=int(frame.isna().any(axis=1).sum()),
        missing={k: v for k, v in missing.items() if v},
    )
    return frame, report


def load_cities(directory: Path) -> tuple[list[CityData], list[IngestionReport]]:
    """
    Read and validate every city listed in the metadata file. Cities come back
    ordered by city_id together with one ingestion report each.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise SchemaError(str(directory), message="input directory not found")
    metadata = _read_metadata(directory).sort_values("city_id", kind="stable")

    cities: list[CityData] = []
    reports: list[IngestionReport] = []
    for meta in metadata.itertuples(index=False):
        frame, report = _read_city(directory / f"{meta.city_id}.csv", meta.city_id)
        cities.append(
            CityData(
                city_id=meta.city_id,
                lat=float(meta.lat),
                lon=float(meta.lon),
                region=meta.region,
                population=int(meta.population),
                frame=frame,
            )
        )
        reports.append(report)
        if report.rows_dropped:
            logger.info(
                f"[city {meta.city_id}] {report.rows_read} rows read, {report.rows_dropped} with missing values"
            )
    listed = set(metadata["city_id"])
    extra = sorted(p.stem for p in directory.glob("*.csv") if p.name != METADATA_FILE and p.stem not in listed)
    if extra:
        logger.warning(f"Ignoring city files not listed in {METADATA_FILE}: {', '.join(extra)}")
    logger.info(f"Loaded {len(cities)} cities from {directory}")
    return cities, reports


def write_cities(directory: Path, cities: Sequence[CityData]) -> None:
    """Write cities in the ingestion layout; ``load_cities`` reads them back unchanged."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    metadata = pd.DataFrame(
        [
            {"city_id": c.city_id, "lat": c.lat, "lon": c.lon, "region": c.region, "population": c.population}
            for c in cities
        ],
        columns=list(METADATA_COLUMNS),
    )
    metadata.to_csv(directory / METADATA_FILE, index=False, lineterminator="\n")
    for city in cities:
        frame = city.frame.copy()
        frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
        for column in COUNT_COLUMNS:
            frame[column] = frame[column].round().astype("Int64")
        frame.to_csv(directory / f"{city.city_id}.csv", index=False, lineterminator="\n")


def ozone_season_filter(city: CityData) -> CityData:
    """Keep April 1 through October 31."""
    keep = city.frame["date"].dt.month.isin(OZONE_SEASON_MONTHS)
    return city.with_frame(city.frame.loc[keep].reset_index(drop=True))


def great_circle_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Haversine distance in km between two (lat, lon) points in degrees."""
    return float(distance_matrix([a, b])[0, 1])


def distance_matrix(coords: Sequence[tuple[float, float]]) -> np.ndarray:
    """Pairwise haversine distances (km) for (lat, lon) pairs."""
    coords = np.radians(np.asarray(coords, dtype=np.float64).reshape(-1, 2))
    lat, lon = coords[:, 0], coords[:, 1]
    dlat = lat[:, None] - lat[None, :]
    dlon = lon[:, None] - lon[None, :]
    h = np.sin(dlat / 2.0) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlon / 2.0) ** 2
    d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d
