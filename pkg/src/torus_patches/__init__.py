"""Steady vortex patches on the flat torus with constant background vorticity."""

__version__ = "0.1.0"

from .contour import MultiPatchProblem, SingleLayerProblem, assemble_multi, assemble_single
from .green import TorusGeometry, green_eval, grad_H, regular_part_H, robin_constant
from .point_vortex import (
    VortexConfiguration,
    centralized_ring,
    equilibrium_residual,
    find_equilibrium,
    hessian_rank,
    kirchhoff_routh,
    ring_configuration,
)
from .solver import SolveSettings, continue_in_eps, solve_gamma, solve_multi, solve_single
from .spectral import FourierCurve, analyze, sobolev_norm
from .torus_special import TruncationPolicy, eval_K, eval_P, truncation_length

__all__ = [
    "FourierCurve",
    "MultiPatchProblem",
    "SingleLayerProblem",
    "SolveSettings",
    "TorusGeometry",
    "TruncationPolicy",
    "VortexConfiguration",
    "analyze",
    "assemble_multi",
    "assemble_single",
    "centralized_ring",
    "continue_in_eps",
    "equilibrium_residual",
    "eval_K",
    "eval_P",
    "find_equilibrium",
    "green_eval",
    "grad_H",
    "hessian_rank",
    "kirchhoff_routh",
    "regular_part_H",
    "ring_configuration",
    "robin_constant",
    "sobolev_norm",
    "solve_gamma",
    "solve_multi",
    "solve_single",
    "truncation_length",
]
