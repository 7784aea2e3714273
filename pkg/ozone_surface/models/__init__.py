from .city import CityData, IngestionReport, COUNT_COLUMNS, COVARIATE_COLUMNS, CITY_COLUMNS, METADATA_COLUMNS
from .stage1 import Stage1Fit, GlobalBasisRecord
from .truth import CityTruth, GroundTruth
from .posterior import PosteriorSample, PosteriorMeta, ChainMeta
from .cv import CvReport, CvModelResult

__all__ = [
    "CityData",
    "IngestionReport",
    "COUNT_COLUMNS",
    "COVARIATE_COLUMNS",
    "CITY_COLUMNS",
    "METADATA_COLUMNS",
    "Stage1Fit",
    "GlobalBasisRecord",
    "CityTruth",
    "GroundTruth",
    "PosteriorSample",
    "PosteriorMeta",
    "ChainMeta",
    "CvReport",
    "CvModelResult",
]
