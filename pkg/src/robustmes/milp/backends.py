"""Solver backends behind a single narrow seam.

Every backend exposes ``solve_lp(instance)`` and ``solve_milp(instance, gap,
node_limit)`` returning :class:`LpSolution` with duals in the same sign
convention.  The built-in simplex/branch-and-bound is the default; the HiGHS
backend (through SciPy) is offered for larger runs and for cross-checks.
"""

from __future__ import annotations

import numpy as np

from .bnb import branch_and_bound, polish
from .instance import EQ, GE, LE, LpSolution, MilpInstance, NumericalFailure, ResourceLimit, Status
from .simplex import simplex_solve


class BuiltinBackend:
    name = "builtin"

    def solve_lp(self, inst: MilpInstance) -> LpSolution:
        return simplex_solve(inst)

    def solve_milp(self, inst: MilpInstance, gap: float = 1e-9, node_limit: int = 200_000) -> LpSolution:
        return branch_and_bound(inst, gap=gap, node_limit=node_limit, lp_solver=simplex_solve)


def _split_rows(inst: MilpInstance):
    senses = np.array(inst.senses, dtype=object)
    le = np.flatnonzero(senses == LE)
    ge = np.flatnonzero(senses == GE)
    eq = np.flatnonzero(senses == EQ)
    return le, ge, eq


class HighsBackend:
    """HiGHS via :mod:`scipy.optimize`; MILP duals come from the fixed-pattern LP."""

    name = "highs"

    def solve_lp(self, inst: MilpInstance) -> LpSolution:
        from scipy.optimize import linprog
        import scipy.sparse as sp

        le, ge, eq = _split_rows(inst)
        A = inst.A
        A_ub = sp.vstack([A[le], -A[ge]]).tocsr() if le.size + ge.size else None
        b_ub = np.concatenate([inst.rhs[le], -inst.rhs[ge]]) if A_ub is not None else None
        A_eq = A[eq] if eq.size else None
        b_eq = inst.rhs[eq] if eq.size else None
        res = linprog(inst.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=np.column_stack([inst.lb, inst.ub]), method="highs")
        if res.status == 2:
            return LpSolution(Status.INFEASIBLE)
        if res.status == 3:
            return LpSolution(Status.UNBOUNDED)
        if res.status != 0:
            raise NumericalFailure(f"HiGHS: {res.message}")
        y = np.zeros(inst.shape[0])
        if A_ub is not None:
            mu = res.ineqlin.marginals
            y[le] = mu[: le.size]
            y[ge] = -mu[le.size:]
        if eq.size:
            y[eq] = res.eqlin.marginals
        d = res.lower.marginals + res.upper.marginals
        return LpSolution(Status.OPTIMAL, x=res.x, duals=y, reduced_costs=d,
                          objective=float(res.fun + inst.offset), iterations=int(res.nit))

    def solve_milp(self, inst: MilpInstance, gap: float = 1e-9, node_limit: int = 200_000) -> LpSolution:
        from scipy.optimize import Bounds, LinearConstraint, milp

        if not inst.integrality.any():
            return self.solve_lp(inst)
        lo = np.where(np.array(inst.senses) == LE, -np.inf, inst.rhs)
        hi = np.where(np.array(inst.senses) == GE, np.inf, inst.rhs)
        cons = [LinearConstraint(inst.A, lo, hi)] if inst.shape[0] else []
        res = milp(inst.c, constraints=cons, bounds=Bounds(inst.lb, inst.ub),
                   integrality=inst.integrality.astype(int),
                   options={"mip_rel_gap": gap, "node_limit": node_limit})
        if res.status == 2:
            return LpSolution(Status.INFEASIBLE)
        if res.status == 3:
            return LpSolution(Status.UNBOUNDED)
        if res.x is None:
            raise ResourceLimit(f"HiGHS: {res.message}")
        sol = polish(inst, res.x, self.solve_lp)
        sol.bound = float(getattr(res, "mip_dual_bound", sol.objective) or sol.objective)
        sol.nodes = int(getattr(res, "mip_node_count", 0) or 0)
        return sol


_BACKENDS = {"builtin": BuiltinBackend, "highs": HighsBackend}
_default = BuiltinBackend()


def get_backend(name: str | None = None):
    if name is None:
        return _default
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(_BACKENDS)}") from None


def set_default_backend(name: str):
    global _default
    _default = get_backend(name)


def solve_lp(inst: MilpInstance, backend=None) -> LpSolution:
    """Solve the LP relaxation of ``inst`` (integrality ignored)."""
    return (backend or _default).solve_lp(inst.relaxed() if inst.integrality.any() else inst)


def solve_milp(inst: MilpInstance, gap: float = 1e-9, backend=None, node_limit: int = 200_000) -> LpSolution:
    """Solve ``inst`` to relative optimality ``gap`` over its binary columns."""
    return (backend or _default).solve_milp(inst, gap=gap, node_limit=node_limit)
