from .surface import BernsteinBasis1D, SurfaceSpec, MonotoneCoeffs
from .config import (
    RunConfig,
    ConfounderConfig,
    ChainConfig,
    Hyperpriors,
    CvConfig,
    ModelVariant,
    MODEL_VARIANTS,
)
from .synthetic import SynthSpec, ConfounderEffects

__all__ = [
    "BernsteinBasis1D",
    "SurfaceSpec",
    "MonotoneCoeffs",
    "RunConfig",
    "ConfounderConfig",
    "ChainConfig",
    "Hyperpriors",
    "CvConfig",
    "ModelVariant",
    "MODEL_VARIANTS",
    "SynthSpec",
    "ConfounderEffects",
]
