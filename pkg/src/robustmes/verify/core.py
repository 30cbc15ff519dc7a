"""Worst-case search over the convex hull of historical data.

Two methods share the same report:

* :func:`blankenship_worst_case` discretizes complete operational schedules;
  the upper problem is a MILP in the hull weights (which balance row attains
  the gap of each schedule is a binary choice).  Valid when the uncertainty
  only moves right-hand sides of balance rows.
* :func:`hybrid_verify` discretizes only the operational binaries and embeds
  the dual of the remaining LP for every pattern, which leaves a bilinear
  program solved to global optimality.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInput, NotApplicable, NotConverged
from ..milp import GE, LE, EQ, InstanceBuilder, solve_milp
from ..scenarios import HullVRep, Scenario, SOLAR, TAMB, scenario_to_dict
from .bilinear import solve_bilinear_global
from .mlp import DEFAULT_DUAL_BOUND, DEFAULT_TERM_BUDGET, PatternSet, Uncertainty, build_mlp_dual_disc

log = logging.getLogger(__name__)

ROBUST = "Robust"
VIOLATED = "Violated"


@dataclass(frozen=True)
class VerifyConfig:
    feas_tol: float = 1e-6
    conv_tol: float = 1e-6
    rel_gap: float = 1e-4
    abs_gap: float = 1e-6
    dual_bound: float = DEFAULT_DUAL_BOUND
    max_iter: int = 200
    node_limit: int = 5000
    term_budget: int = DEFAULT_TERM_BUDGET
    embed_primal: bool = True
    workers: int = 1
    backend: object = None
    base: Scenario | None = None

    def __post_init__(self):
        if self.feas_tol <= 0 or self.conv_tol <= 0 or self.rel_gap < 0 or self.abs_gap <= 0:
            raise InvalidInput("tolerances must be positive")
        if self.max_iter < 1 or self.node_limit < 1:
            raise InvalidInput("iteration and node limits must be at least 1")


@dataclass
class VerifyStep:
    upper: float  # running upper bound on the worst gap
    candidate: float  # value of the discretized problem at its candidate point
    witness: float  # operational gap at the candidate point
    theta: list
    nodes: int = 0

    def to_dict(self) -> dict:
        return {"upper": self.upper, "candidate": self.candidate, "witness": self.witness,
                "theta": list(self.theta), "nodes": self.nodes}


@dataclass
class VerifyReport:
    status: str
    method: str
    theta: np.ndarray
    scenario: Scenario
    point: dict
    phi: float
    iterations: int
    trace: list
    n_patterns: int
    converged: bool = True
    gap_limited: bool = False
    warnings: list = field(default_factory=list)
    wall_time: float = 0.0
    labels: tuple = ()

    @property
    def upper_bounds(self) -> list:
        return [s.upper for s in self.trace]

    @property
    def witnesses(self) -> list:
        return [s.witness for s in self.trace]

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "method": self.method,
            "phi": self.phi,
            "theta": {lab: float(t) for lab, t in zip(self.labels, self.theta)},
            "point": [[k[0], int(k[1]), float(v)] for k, v in self.point.items()],
            "scenario": scenario_to_dict(self.scenario),
            "iterations": self.iterations,
            "n_patterns": self.n_patterns,
            "converged": self.converged,
            "gap_limited": self.gap_limited,
            "warnings": list(self.warnings),
            "wall_time": self.wall_time,
            "trace": [s.to_dict() for s in self.trace],
        }


def _initial(unc: Uncertainty, backend):
    """Operational gap at every generator; returns (values, schedules, index of the worst)."""
    D = unc.n_generators
    vals, xs = [], []
    for d in range(D):
        v, x = unc.solve(np.eye(D)[d], backend)
        vals.append(v)
        xs.append(x)
    worst = int(np.argmax(vals))  # first maximum on ties
    return vals, xs, worst


def _report(method, unc, cfg, best, trace, n_patterns, converged, t0, gap_limited=False, warnings=()):
    v, theta = best
    status = VIOLATED if v > cfg.feas_tol else ROBUST
    return VerifyReport(status, method, theta, unc.scenario(theta), unc.hull.values(theta), v,
                        len(trace), trace, n_patterns, converged, gap_limited, list(warnings),
                        time.perf_counter() - t0, unc.hull.labels)


# ---------------------------------------------------------------- schedule discretization


def _check_demand_only(unc: Uncertainty):
    c = unc.compiled
    varying = set(unc.varying())
    for ch in varying:
        if ch[0] in (SOLAR, TAMB):
            raise NotApplicable(f"channel {ch} is not a demand; use hybrid_verify")
    if any(t.channel in varying for t in c.coef_terms):
        raise NotApplicable("uncertain coefficients; use hybrid_verify")
    phi_rows = set(c.base.A.tocsc()[:, c.phi].indices.tolist())
    for t in c.rhs_terms:
        if t.channel in varying and t.row not in phi_rows:
            raise NotApplicable("uncertainty outside the balance rows; use hybrid_verify")
    return np.array(sorted(phi_rows))


def blankenship_worst_case(model, design, hull: HullVRep, config: VerifyConfig | None = None) -> VerifyReport:
    """Adaptive discretization over complete operational schedules.

    Upper problem: ``max eta`` over hull weights such that for every stored
    schedule some balance row has gap at least ``eta`` (a MILP); lower
    problem: the operational MILP at the candidate.  Stops when the upper
    value exceeds the best witness by at most ``conv_tol``.
    """
    cfg = config or VerifyConfig()
    t0 = time.perf_counter()
    unc = Uncertainty.build(model, design, hull, cfg.base)
    R = _check_demand_only(unc)
    c = unc.compiled
    D = unc.n_generators
    A = c.base.A.tocsr()[R]
    phi_coef = A[:, [c.phi]].toarray().ravel()
    if np.any(phi_coef >= 0):
        raise NotApplicable("gap rows must carry phi with a negative coefficient")
    Rg = np.array([c.at(unc.generator_values(d)).rhs[R] for d in range(D)])  # D x |R|
    vals, xs, worst = _initial(unc, cfg.backend)
    best = (vals[worst], np.eye(D)[worst])
    schedules = [xs[worst]]
    trace = []
    for it in range(cfg.max_iter):
        # gap of schedule k on row r at generator d, per unit of -phi coefficient
        G = []
        for x in schedules:
            xs_ = x.copy()
            xs_[c.phi] = 0.0
            act = A @ xs_
            G.append((act[None, :] - Rg) / -phi_coef[None, :])  # D x |R|
        U = min(float(g.max()) for g in G)
        bld = InstanceBuilder()
        th = [bld.add_var(("theta", d), 0.0, 1.0) for d in range(D)]
        eta = bld.add_var(("eta",), -np.inf, U, obj=-1.0)
        bld.add_row({t: 1.0 for t in th}, EQ, 1.0, ("simplex",))
        for k, g in enumerate(G):
            s = [bld.add_var(("s", k, r), binary=True) for r in range(len(R))]
            bld.add_row({v: 1.0 for v in s}, EQ, 1.0, ("choose", k))
            for r in range(len(R)):
                M = U - float(g[:, r].min())
                # eta <= sum_d theta_d g[d, r] + M (1 - s_r)
                coeffs = {eta: 1.0, s[r]: M}
                for d in range(D):
                    coeffs[th[d]] = coeffs.get(th[d], 0.0) - g[d, r]
                bld.add_row(coeffs, LE, M, ("gap", k, r))
        sol = solve_milp(bld.build(), gap=1e-12, backend=cfg.backend)
        if not sol.optimal:
            raise RuntimeError(f"upper problem is {sol.status.value}")
        theta = np.clip(sol.x[th], 0.0, None)
        theta /= theta.sum()
        upper = -float(sol.objective)
        v, x = unc.solve(theta, cfg.backend)
        if v > best[0]:
            best = (v, theta)
        trace.append(VerifyStep(upper, upper, v, theta.tolist(), int(sol.nodes or 0)))
        log.info("schedule discretization %d: upper %.9g, witness %.9g", it + 1, upper, v)
        if upper - best[0] <= cfg.conv_tol:
            return _report("blankenship", unc, cfg, best, trace, len(schedules), True, t0)
        schedules.append(x)
    raise NotConverged(f"no convergence after {cfg.max_iter} iterations",
                       _report("blankenship", unc, cfg, best, trace, len(schedules), False, t0))


# ---------------------------------------------------------------- hybrid method


def hybrid_verify(model, design, hull: HullVRep, config: VerifyConfig | None = None,
                  patterns=None) -> VerifyReport:
    """Integer discretization with embedded duals, solved by spatial branch-and-bound.

    Starts from the pattern of the generator with the largest gap (plus any
    ``patterns`` given).  Each iteration solves the bilinear program for the
    current pattern set, evaluates the operational MILP at its candidate and
    adds the candidate's pattern.  The reported upper bound is the running
    minimum of the proven global bounds, so it never increases.
    """
    cfg = config or VerifyConfig()
    t0 = time.perf_counter()
    unc = Uncertainty.build(model, design, hull, cfg.base)
    D = unc.n_generators
    vals, xs, worst = _initial(unc, cfg.backend)
    best = (vals[worst], np.eye(D)[worst])
    pset = PatternSet()
    for p in patterns or ():
        if _pattern_feasible(unc, p, cfg.backend):
            pset.add(p)
        else:
            log.info("discarding a pattern that is infeasible at every generator")
    pset.add(unc.pattern_of(xs[worst]))
    trace, warnings = [], []
    upper = np.inf
    gap_limited = False
    tight = False  # after a repeated pattern the same program is re-solved to conv_tol
    mlp = None
    for it in range(cfg.max_iter):
        if mlp is None or len(mlp.patterns) != len(pset):
            mlp = build_mlp_dual_disc(unc, list(pset), dual_bound=cfg.dual_bound, embed_primal=cfg.embed_primal,
                                      term_budget=cfg.term_budget, backend=cfg.backend)
        rel, ab = (0.0, cfg.conv_tol) if tight else (cfg.rel_gap, cfg.abs_gap)
        res = solve_bilinear_global(mlp.program, rel, ab, cfg.node_limit, cfg.backend,
                                    cfg.workers, target=best[0] + cfg.conv_tol)
        if res.x is None:
            raise RuntimeError("the discretized worst-case program has no feasible point")
        for w in mlp.warnings:
            if w not in warnings:
                warnings.append(w)
        theta = mlp.theta_of(res.x)
        upper = min(upper, res.bound)
        v, x = unc.solve(theta, cfg.backend)
        if v > best[0]:
            best = (v, theta)
        trace.append(VerifyStep(upper, res.value, v, theta.tolist(), res.nodes))
        log.info("hybrid iteration %d: %d patterns, upper %.9g, candidate %.9g, witness %.9g",
                 it + 1, len(pset), upper, res.value, v)
        if upper - best[0] <= cfg.conv_tol:
            break
        if pset.add(unc.pattern_of(x)):
            tight = False
        elif not tight:
            # the candidate's optimal pattern is already present, so the program
            # value there equals the witness; only the bilinear gap is left
            tight = True
        else:
            gap_limited = True
            log.info("pattern repeated; stopping with the bilinear solver gap %.3g", upper - best[0])
            break
    else:
        raise NotConverged(f"no convergence after {cfg.max_iter} iterations",
                           _report("hybrid", unc, cfg, best, trace, len(pset), False, t0, False, warnings))
    return _report("hybrid", unc, cfg, best, trace, len(pset), True, t0, gap_limited, warnings)


def _pattern_feasible(unc: Uncertainty, pattern, backend) -> bool:
    from ..milp import Status

    for d in range(unc.n_generators):
        if unc.fixed_lp(pattern, np.eye(unc.n_generators)[d], backend=backend).status is Status.OPTIMAL:
            return True
    return False


# ---------------------------------------------------------------- grid sampling


@dataclass
class RegionGrid:
    keys: tuple
    d1: np.ndarray
    d2: np.ndarray
    phi: np.ndarray  # phi[i, j] at (d1[i], d2[j])
    feas_tol: float

    @property
    def feasible(self) -> np.ndarray:
        return self.phi <= self.feas_tol

    def cell_of(self, point) -> tuple:
        """Index of the cell containing ``point`` = (d1, d2)."""
        h1 = self.d1[1] - self.d1[0] if self.d1.size > 1 else 1.0
        h2 = self.d2[1] - self.d2[0] if self.d2.size > 1 else 1.0
        i = int(np.clip(np.floor((point[0] - (self.d1[0] - h1 / 2)) / h1), 0, self.d1.size - 1))
        j = int(np.clip(np.floor((point[1] - (self.d2[0] - h2 / 2)) / h2), 0, self.d2.size - 1))
        return i, j

    def rows(self):
        for i, a in enumerate(self.d1):
            for j, b in enumerate(self.d2):
                yield float(a), float(b), float(self.phi[i, j]), bool(self.phi[i, j] <= self.feas_tol)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["d1", "d2", "phi", "feasible"])
            for a, b, p, f in self.rows():
                w.writerow([repr(a), repr(b), repr(p), int(f)])


def sample_region(model, design, keys, box, n: int = 100, base: Scenario | None = None,
                  feas_tol: float = 1e-6, backend=None) -> RegionGrid:
    """Operational gap on an ``n x n`` grid of cell centres over a 2-D box of two channels.

    ``keys`` names the two channels, e.g. ``[("heat", 0), ("electricity", 0)]``;
    ``box`` is ``((lo1, hi1), (lo2, hi2))``.
    """
    from ..compile import build_operational_milp

    keys = tuple(tuple(k) for k in keys)
    if len(keys) != 2:
        raise InvalidInput("sample_region needs exactly two channels")
    (a0, a1), (b0, b1) = box
    if not (a1 > a0 and b1 > b0) or n < 1:
        raise InvalidInput("box must have positive extent and n >= 1")
    if base is None:
        base = Scenario.constant({}, 1 + max(t for _, t in keys))
    compiled = build_operational_milp(model, design, base)
    vals = compiled.values_of(base)
    for k in keys:
        if k not in vals:
            raise InvalidInput(f"channel {k} does not enter the operational problem")
    d1 = a0 + (np.arange(n) + 0.5) * (a1 - a0) / n
    d2 = b0 + (np.arange(n) + 0.5) * (b1 - b0) / n
    phi = np.empty((n, n))
    for i, a in enumerate(d1):
        for j, b in enumerate(d2):
            vals[keys[0]] = float(a)
            vals[keys[1]] = float(b)
            sol = solve_milp(compiled.at(vals), backend=backend)
            if not sol.optimal:
                raise RuntimeError(f"operational problem is {sol.status.value} at ({a}, {b})")
            phi[i, j] = sol.objective
    return RegionGrid(keys, d1, d2, phi, feas_tol)
