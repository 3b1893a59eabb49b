from .als import als_direction_solve, als_sweep
from .cg import cg_solve
from .energy import matrix_element, mu_newton, rayleigh
from .iterate import SolveResult, Trace, greens_iterate, initial_guess
from .normal import apply_normal, build_normal_matrix
from .rhs import build_rhs

__all__ = [
    "als_direction_solve", "als_sweep", "cg_solve", "matrix_element", "mu_newton", "rayleigh",
    "SolveResult", "Trace", "greens_iterate", "initial_guess", "apply_normal",
    "build_normal_matrix", "build_rhs",
]
