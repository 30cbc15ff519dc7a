"""Desk-scale LP/MILP solving with dual extraction."""

from .backends import BuiltinBackend, HighsBackend, get_backend, set_default_backend, solve_lp, solve_milp
from .bnb import branch_and_bound
from .instance import (
    EQ, GE, LE, InstanceBuilder, LpSolution, MilpInstance, NumericalFailure, ResourceLimit,
    SolverError, Status,
)
from .lpformat import write_lp
from .simplex import simplex_solve

__all__ = [
    "EQ", "GE", "LE", "BuiltinBackend", "HighsBackend", "InstanceBuilder", "LpSolution",
    "MilpInstance", "NumericalFailure", "ResourceLimit", "SolverError", "Status",
    "branch_and_bound", "get_backend", "set_default_backend", "simplex_solve", "solve_lp",
    "solve_milp", "write_lp",
]
