import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator


COUNT_COLUMNS: tuple[str, ...] = ("deaths_u65", "deaths_65_74", "deaths_75p")
COVARIATE_COLUMNS: tuple[str, ...] = ("ozone", "temp", "dewpoint")
CITY_COLUMNS: tuple[str, ...] = ("date",) + COUNT_COLUMNS + COVARIATE_COLUMNS
METADATA_COLUMNS: tuple[str, ...] = ("city_id", "lat", "lon", "region", "population")


class IngestionReport(BaseModel):
    city_id: str
    rows_read: int
    rows_dropped: int = 0
    missing: dict[str, int] = Field(default_factory=dict)


class CityData(BaseModel):
    """
    One city's daily series. ``frame`` holds the columns of CITY_COLUMNS, one
    row per day, with NaN marking a missing value.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    city_id: str
    lat: float = Field(..., ge=-90, le=90)
    lon: float = Field(..., ge=-180, le=180)
    region: str = "unknown"
    population: int = Field(..., gt=0)
    frame: pd.DataFrame

    @field_validator("frame")
    @classmethod
    def _valid_frame(cls, frame: pd.DataFrame) -> pd.DataFrame:
        missing = [c for c in CITY_COLUMNS if c not in frame.columns]
        if missing:
            raise ValueError(f"missing columns: {', '.join(missing)}")
        frame = frame.loc[:, list(CITY_COLUMNS)].reset_index(drop=True).copy()
        frame["date"] = pd.to_datetime(frame["date"])
        if not frame["date"].is_monotonic_increasing or frame["date"].duplicated().any():
            raise ValueError("dates must be strictly increasing")
        for column in COUNT_COLUMNS:
            values = frame[column].to_numpy(dtype=np.float64)
            present = values[~np.isnan(values)]
            if np.any(present < 0) or np.any(present != np.round(present)):
                raise ValueError(f"{column} must hold nonnegative integer counts")
            frame[column] = values
        for column in COVARIATE_COLUMNS:
            frame[column] = frame[column].to_numpy(dtype=np.float64)
        return frame

    @property
    def n_days(self) -> int:
        return int(self.frame.shape[0])

    def with_frame(self, frame: pd.DataFrame) -> "CityData":
        return CityData(
            city_id=self.city_id,
            lat=self.lat,
            lon=self.lon,
            region=self.region,
            population=self.population,
            frame=frame,
        )
