from .config import settings, setup_logging
from .seeding import derive_rng, derive_seed_sequence
from .exceptions import (
    OzoneSurfaceError,
    ConfigurationError,
    SchemaError,
    DomainError,
    InsufficientDataError,
    RankDeficiencyError,
    FittingError,
    GlmConvergenceError,
    NotPositiveDefiniteError,
    handle_cli_error,
)


__all__ = [
    "settings",
    "setup_logging",
    "derive_rng",
    "derive_seed_sequence",
    "OzoneSurfaceError",
    "ConfigurationError",
    "SchemaError",
    "DomainError",
    "InsufficientDataError",
    "RankDeficiencyError",
    "FittingError",
    "GlmConvergenceError",
    "NotPositiveDefiniteError",
    "handle_cli_error",
]
