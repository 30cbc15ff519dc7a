"""Feasibility time-step heuristic: design on representative days, audit every day, add the worst."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .compile import build_design_milp, build_operational_milp, design_from_solution, energy_gap, with_scenario
from .errors import InvalidInput, NotConverged
from .milp import solve_milp
from .model import Design, SystemModel
from .scenarios import DayMatrix, cluster_days

log = logging.getLogger(__name__)

CAVEAT = ("all historical days are feasible; this does not certify days inside their convex hull "
          "(use the verifier for that)")


@dataclass(frozen=True)
class HeuristicConfig:
    k: int = 4
    seed: int = 0
    restarts: int = 50
    feas_tol: float = 1e-6
    design_gap: float = 0.005
    max_iter: int = 25
    workers: int = 1
    backend: object = None

    def __post_init__(self):
        if self.feas_tol <= 0 or self.design_gap <= 0:
            raise InvalidInput("tolerances must be positive")
        if self.max_iter < 1:
            raise InvalidInput("max_iter must be at least 1")


@dataclass
class Iteration:
    n_scenarios: int
    design: Design
    objective: float
    violations: list
    wall_time: float
    added_day: int | None = None

    def to_dict(self) -> dict:
        return {"n_scenarios": self.n_scenarios, "design": self.design.to_dict(), "objective": self.objective,
                "violations": [[int(d), float(p)] for d, p in self.violations],
                "wall_time": self.wall_time, "added_day": self.added_day}


@dataclass
class HeuristicTrace:
    iterations: list = field(default_factory=list)
    converged: bool = False
    weights: list = field(default_factory=list)
    note: str = CAVEAT

    def to_dict(self) -> dict:
        return {"converged": self.converged, "note": self.note, "weights": [float(w) for w in self.weights],
                "iterations": [it.to_dict() for it in self.iterations]}


def _solve_phi(compiled, backend):
    sol = solve_milp(compiled.instance, backend=backend)
    if not sol.optimal:
        raise RuntimeError(f"operational problem is {sol.status.value}")
    return sol


def audit_design(model: SystemModel, design: Design, data: DayMatrix, backend=None, workers: int = 1,
                 with_schedules: bool = False) -> list:
    """Operational energy gap for every day, sorted by decreasing gap (then by day index).

    With ``with_schedules`` each entry also carries the schedule dict and the
    gap recomputed from it by :func:`energy_gap`.
    """
    scenarios = data.scenarios()
    first = build_operational_milp(model, design, scenarios[0])

    def one(d):
        c = first if d == 0 else with_scenario(first, scenarios[d])
        sol = _solve_phi(c, backend)
        if with_schedules:
            sched = c.schedule(sol.x)
            return (d, float(sol.objective), sched, energy_gap(model, design, scenarios[d], sched))
        return (d, float(sol.objective))

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(one, range(len(scenarios))))
    else:
        out = [one(d) for d in range(len(scenarios))]
    return sorted(out, key=lambda r: (-r[1], r[0]))


def solve_design(model: SystemModel, scenarios, gap: float = 0.005, backend=None) -> tuple:
    """Design MILP over ``scenarios``; returns (Design, objective)."""
    inst, vm = build_design_milp(model, scenarios)
    sol = solve_milp(inst, gap=gap, backend=backend)
    if not sol.optimal:
        raise RuntimeError(f"design problem is {sol.status.value}")
    return design_from_solution(model, vm, sol.x), float(sol.objective)


def feasibility_timestep(model: SystemModel, data: DayMatrix, k: int | None = None,
                         config: HeuristicConfig | None = None) -> tuple:
    """Iterate design on representative days plus added days until every historical day is feasible.

    Each iteration adds the single most violated day.  Added days carry zero
    cost weight: they constrain feasibility while the representatives keep
    the annual weights.  Returns ``(design, trace)``; raises
    :class:`NotConverged` with the trace after ``config.max_iter`` iterations.
    """
    cfg = config or HeuristicConfig()
    if data.n_days < 1:
        raise InvalidInput("no historical days")
    k = cfg.k if k is None else k
    clusters = cluster_days(data, min(k, data.n_days), seed=cfg.seed, restarts=cfg.restarts, workers=cfg.workers)
    trace = HeuristicTrace(weights=list(clusters.weights))
    scenarios = list(clusters.representatives)
    added = []
    for it in range(cfg.max_iter):
        t0 = time.perf_counter()
        design, obj = solve_design(model, scenarios, cfg.design_gap, cfg.backend)
        audit = audit_design(model, design, data, cfg.backend, cfg.workers)
        violations = [(d, p) for d, p in audit if p > cfg.feas_tol]
        step = Iteration(len(scenarios), design, obj, violations, 0.0)
        trace.iterations.append(step)
        log.info("iteration %d: %d scenarios, %d violated days", it + 1, len(scenarios), len(violations))
        if not violations:
            step.wall_time = time.perf_counter() - t0
            trace.converged = True
            return design, trace
        fresh = [d for d, _ in violations if d not in added]
        if not fresh:
            step.wall_time = time.perf_counter() - t0
            raise NotConverged("violated days are already in the scenario set", trace)
        day = fresh[0]
        added.append(day)
        step.added_day = int(day)
        scenarios.append(data.scenario(day, weight=0.0))
        step.wall_time = time.perf_counter() - t0
    raise NotConverged(f"no robust design after {cfg.max_iter} iterations", trace)


def max_gap(model: SystemModel, design: Design, data: DayMatrix, backend=None) -> float:
    audit = audit_design(model, design, data, backend)
    return float(max(p for _, p in audit)) if audit else -np.inf
