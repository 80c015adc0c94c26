"""Ergodic sampling on level sets of reaction coordinates.

Generates trajectories of constrained diffusion schemes on a surface
xi(x) = 0, estimates means under the conditional and surface measures, and
verifies the structural identities those schemes rely on.
"""

__version__ = "0.1.0"

from .dynamics import ChainReport, ChainState, SchemeConfig, run_chain
from .flows import FlowConfig, FlowResult, pi_nearest, theta, theta_skew
from .geometry import (
    Chart,
    DiffusionField,
    ManifoldModel,
    ProjectionData,
    eval_mean_curvature_id,
    eval_pa_divergence,
    eval_projection,
    eval_psi,
    generator_apply,
)
from .models import BuiltinSpec, build, make_ellipse, make_linear, make_sphere
from .noise import GaussianNoise

__all__ = [
    "BuiltinSpec",
    "ChainReport",
    "ChainState",
    "Chart",
    "DiffusionField",
    "FlowConfig",
    "FlowResult",
    "GaussianNoise",
    "ManifoldModel",
    "ProjectionData",
    "SchemeConfig",
    "build",
    "eval_mean_curvature_id",
    "eval_pa_divergence",
    "eval_projection",
    "eval_psi",
    "generator_apply",
    "make_ellipse",
    "make_linear",
    "make_sphere",
    "pi_nearest",
    "run_chain",
    "theta",
    "theta_skew",
    "__version__",
]
