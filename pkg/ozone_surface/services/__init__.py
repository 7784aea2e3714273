from .basis import eval_surface, eval_dfdx1, eval_cross_deriv, transform_matrix, truncate_theta
from .glm import GlmFit, fit_poisson_quasi
from .confounders import ConfounderDesign, build_confounder_design
from .stage1 import Stage1Service, fit_city, save_stage1, load_stage1
from .hier import run_chain, chain_diagnostics
from .cv import CvService, run_cv
from .data import load_cities, write_cities, distance_matrix
from .synthetic import generate_synthetic

__all__ = [
    "eval_surface",
    "eval_dfdx1",
    "eval_cross_deriv",
    "transform_matrix",
    "truncate_theta",
    "GlmFit",
    "fit_poisson_quasi",
    "ConfounderDesign",
    "build_confounder_design",
    "Stage1Service",
    "fit_city",
    "save_stage1",
    "load_stage1",
    "run_chain",
    "chain_diagnostics",
    "CvService",
    "run_cv",
    "load_cities",
    "write_cities",
    "distance_matrix",
    "generate_synthetic",
]
