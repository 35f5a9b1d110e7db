"""Cumulative reweighted lq regularization with recycled generalized Krylov subspaces.

Modules
-------
operators   explicit blur, gradient and fan-beam projection matrices
solver      the recycled MM-GKS inner solver and the cumulative outer driver
problems    phantoms, calibrated noise and the three benchmark problems
methods     named solver variants and per-problem presets
cli         ``crgks gen | solve | experiment``
"""
__version__ = "0.1.0"

from .operators import (
    GradientOperator,
    LinearOperator,
    build_gaussian_blur,
    build_gradient_1d,
    build_gradient_2d,
    build_radon_fanbeam,
)
from .methods import METHODS, method_config, run_method
from .problems import InverseProblem, make_experiment
from .solver import ConvergenceLog, SolverConfig, cr_lq_rmm_gks, rmm_gks

__all__ = [
    "__version__",
    "LinearOperator",
    "GradientOperator",
    "build_gaussian_blur",
    "build_gradient_1d",
    "build_gradient_2d",
    "build_radon_fanbeam",
    "InverseProblem",
    "make_experiment",
    "SolverConfig",
    "ConvergenceLog",
    "rmm_gks",
    "cr_lq_rmm_gks",
    "METHODS",
    "method_config",
    "run_method",
]
