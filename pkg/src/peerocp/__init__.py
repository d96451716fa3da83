"""Peer two-step triplets for discretize-then-optimize optimal control."""

from .analysis import (contraction_factors, error_constants, stability_scan,
                       verify_order_conditions, verify_structure, zero_stability_norm)
from .integrate import (SolverError, SolverOptions, TrajectorySolution, adjoint_sweep,
                        forward_sweep, solve_state_adjoint)
from .mesh import (MeshDensity, difference_vectors, equidistribute, estimate_errors,
                   eta_consistency_check, weighted_density)
from .optimize import (OptimizationReport, optimize, postprocess_controls, reduced_gradient,
                       solve_quadratic)
from .problem import ControlProblem, Grid, augment_lagrange, grid_metrics
from .triplets import PeerTriplet, build_triplet, known_triplets

__version__ = "0.1.0"

__all__ = [
    "PeerTriplet", "build_triplet", "known_triplets",
    "verify_order_conditions", "verify_structure", "error_constants", "zero_stability_norm",
    "stability_scan", "contraction_factors",
    "ControlProblem", "Grid", "augment_lagrange", "grid_metrics",
    "SolverOptions", "SolverError", "TrajectorySolution", "forward_sweep", "adjoint_sweep",
    "solve_state_adjoint",
    "optimize", "solve_quadratic", "reduced_gradient", "postprocess_controls",
    "OptimizationReport",
    "difference_vectors", "estimate_errors", "weighted_density", "MeshDensity",
    "equidistribute", "eta_consistency_check",
]
