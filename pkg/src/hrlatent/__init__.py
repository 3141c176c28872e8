"""Latent Hüsler–Reiss extremal graphical models.

Variogram estimation, the sparse-plus-low-rank surrogate likelihood program,
refitting, and synthetic structure-recovery experiments.
"""

from ._backend import BACKEND
from .errors import HRLatentError
from .evaluate import f_score, grid_select, identifiability_report, validation_loglik
from .matcore import (
    complement_basis,
    gamma_from_theta,
    is_valid_variogram,
    marginal_precision,
    projection_matrix,
    theta_from_gamma,
)
from .simulate import (
    SyntheticModelSpec,
    build_synthetic_model,
    n_for_k,
    sample_max_stable_hr,
    sample_model,
    sample_pareto_hr,
)
from .solver import (
    LatentDecomposition,
    SolverOptions,
    default_lambda_grid,
    eglatent,
    eglearn_baseline,
    extract_structure,
    refit,
    solve_path,
    stage1_refit,
    surrogate_mle,
)
from .variogram import empirical_variogram

__version__ = "0.1.0"
