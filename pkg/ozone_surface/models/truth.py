from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field

from ..schemas.pydantic.config import SynthFamily
from ..schemas.pydantic.surface import SurfaceSpec

TRUTH_FILE = "truth.json"


class CityTruth(BaseModel):
    model_config = ConfigDict(frozen=True)

    city_id: str
    surface: SurfaceSpec
    effect_multiplier: float = 1.0


class GroundTruth(BaseModel):
    """Generating surfaces of a synthetic data set, written beside the city files."""

    model_config = ConfigDict(frozen=True)

    seed: int
    family: SynthFamily
    cities: list[CityTruth] = Field(default_factory=list)

    def surface(self, city_id: str) -> SurfaceSpec:
        for city in self.cities:
            if city.city_id == city_id:
                return city.surface
        raise KeyError(city_id)

    def save(self, directory: Path) -> Path:
        path = Path(directory) / TRUTH_FILE
        path.write_text(self.model_dump_json(indent=1), encoding="utf-8")
        return path

    @classmethod
    def load(cls, directory: Path) -> "GroundTruth":
        return cls.model_validate_json((Path(directory) / TRUTH_FILE).read_text(encoding="utf-8"))
