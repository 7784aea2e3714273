from .prior import SpatialPrior, exponential_correlation, as_grid, as_vector
from .likelihood import (
    CityLikelihood,
    projection_matrix,
    log_likelihood_stage2,
    gamma_posterior_mean,
    nearest_pd,
)
from .sampler import HierSampler, HierState, run_chain, sample_truncated_normal
from .diagnostics import chain_diagnostics

__all__ = [
    "SpatialPrior",
    "exponential_correlation",
    "as_grid",
    "as_vector",
    "CityLikelihood",
    "projection_matrix",
    "log_likelihood_stage2",
    "gamma_posterior_mean",
    "nearest_pd",
    "HierSampler",
    "HierState",
    "run_chain",
    "sample_truncated_normal",
    "chain_diagnostics",
]
