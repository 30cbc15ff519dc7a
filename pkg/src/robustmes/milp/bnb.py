"""Best-bound branch-and-bound over binary columns."""

from __future__ import annotations

import heapq
import itertools
import logging
import math

import numpy as np

from .instance import LpSolution, MilpInstance, ResourceLimit, Status
from .simplex import simplex_solve

log = logging.getLogger(__name__)

INT_TOL = 1e-6
DIVE_EVERY = 50


def _tighten_binaries(inst: MilpInstance):
    lb, ub = inst.lb.copy(), inst.ub.copy()
    b = inst.integrality
    lb[b] = np.ceil(lb[b] - INT_TOL)
    ub[b] = np.floor(ub[b] + INT_TOL)
    return lb, ub


def _most_fractional(x, binaries):
    xb = x[binaries]
    frac = np.abs(xb - np.round(xb))
    if frac.size == 0 or frac.max() <= INT_TOL:
        return -1
    return int(binaries[int(np.argmax(frac))])


def _solve(lp_solver, inst, warm=None):
    if warm is not None and getattr(lp_solver, "warm_start", False):
        return lp_solver(inst, warm=warm)
    return lp_solver(inst)


def polish(inst: MilpInstance, x, lp_solver=simplex_solve, warm=None) -> LpSolution:
    """Re-solve the LP with every binary fixed to its rounded value in ``x``."""
    lb, ub = inst.lb.copy(), inst.ub.copy()
    b = inst.integrality
    fixed = np.round(x[b])
    lb[b] = ub[b] = fixed
    return _solve(lp_solver, inst.with_bounds(lb, ub), warm)


def dive(inst: MilpInstance, lb, ub, sol: LpSolution, binaries, lp_solver=simplex_solve):
    """Fix the most fractional binary to its nearest value and re-solve until integral.

    A primal heuristic without backtracking; returns an integral LP solution
    or ``None``.
    """
    lb, ub = lb.copy(), ub.copy()
    for _ in range(binaries.size):
        j = _most_fractional(sol.x, binaries)
        if j < 0:
            return sol
        lb[j] = ub[j] = float(np.round(sol.x[j]))
        sol = _solve(lp_solver, inst.with_bounds(lb, ub), sol.basis)
        if sol.status is not Status.OPTIMAL:
            return None
    return sol if _most_fractional(sol.x, binaries) < 0 else None


def branch_and_bound(inst: MilpInstance, gap: float = 1e-9, node_limit: int = 200_000,
                     lp_solver=simplex_solve, abs_gap: float = 1e-9, on_node=None) -> LpSolution:
    """Solve ``inst`` to a relative optimality gap.

    Nodes are explored best-bound first and branched on the most fractional
    binary. The returned solution comes from re-solving the LP with the
    incumbent's binaries fixed, so its ``duals`` are the multipliers of that
    fixed-pattern LP.  ``bound`` holds the best proven lower bound.
    ``on_node(instance, solution)`` is called after every node LP.
    """
    if on_node is not None:
        inner = lp_solver

        def lp_solver(node_inst, **kw):
            sol = _solve(inner, node_inst, kw.get("warm"))
            on_node(node_inst, sol)
            return sol

        lp_solver.warm_start = getattr(inner, "warm_start", False)

    binaries = np.flatnonzero(inst.integrality)
    lb0, ub0 = _tighten_binaries(inst)
    if np.any(lb0 > ub0):
        return LpSolution(Status.INFEASIBLE)
    root = lp_solver(inst.with_bounds(lb0, ub0))
    if binaries.size == 0 or root.status is not Status.OPTIMAL:
        root.nodes = 1
        root.bound = root.objective
        return root

    counter = itertools.count()
    heap = [(root.objective, next(counter), lb0, ub0, root)]
    incumbent: LpSolution | None = None
    best_val = math.inf
    nodes = 1

    def close_enough(bound):
        return best_val - bound <= max(gap * abs(best_val), abs_gap)

    def offer(sol: LpSolution):
        nonlocal incumbent, best_val
        pol = polish(inst, sol.x, lp_solver, sol.basis)
        if pol.status is Status.OPTIMAL and pol.objective < best_val:
            incumbent, best_val = pol, pol.objective

    def try_dive(lb, ub, sol):
        found = dive(inst, lb, ub, sol, binaries, lp_solver)
        if found is not None:
            offer(found)

    try_dive(lb0, ub0, root)
    popped = 0
    while heap:
        bound, _, lb, ub, sol = heapq.heappop(heap)
        if incumbent is not None and close_enough(bound):
            heap.clear()
            heapq.heappush(heap, (bound, 0, lb, ub, sol))
            break
        j = _most_fractional(sol.x, binaries)
        if j < 0:
            offer(sol)
            continue
        popped += 1
        if incumbent is None and popped % DIVE_EVERY == 0:
            try_dive(lb, ub, sol)
        for value in (math.floor(sol.x[j]), math.ceil(sol.x[j])):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = value
            child = _solve(lp_solver, inst.with_bounds(clb, cub), sol.basis)
            nodes += 1
            if child.status is Status.UNBOUNDED:
                child.nodes = nodes
                return child
            if child.status is not Status.OPTIMAL:
                continue
            if incumbent is not None and close_enough(child.objective):
                continue
            if _most_fractional(child.x, binaries) < 0:
                offer(child)
                continue
            heapq.heappush(heap, (child.objective, next(counter), clb, cub, child))
        if nodes > node_limit:
            raise ResourceLimit(f"node limit {node_limit} exceeded", incumbent=incumbent)

    if incumbent is None:
        return LpSolution(Status.INFEASIBLE, nodes=nodes)
    incumbent.nodes = nodes
    incumbent.bound = min(best_val, heap[0][0]) if heap else best_val
    return incumbent
