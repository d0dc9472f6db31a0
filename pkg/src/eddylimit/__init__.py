"""Discrete Maxwell evolution in exponentially weighted norms and the eddy-current limit."""
from .discrete_ops import (
    BlockOperatorA,
    SparseOperator,
    Trajectory,
    apply_A,
    assemble_curl0,
    check_discrete_d0_positivity,
    d0_apply,
    d0_inverse_apply,
    weighted_norm,
)
from .evolution import EvolutionProblem, SolveResult, solve_evolution, step_matrix, verify_causality
from .materials import LimitFamily, MaterialMap, assemble_M, assemble_N, uniform_family_bound, wellposedness_constant
from .mesh import BoundarySplit, Grid, StateVector, build_grid, inner_product

__version__ = "0.1.0"
