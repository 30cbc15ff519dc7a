"""Translate a system model into design and operational MILPs.

Column and row names are tuples whose first entry is the kind, e.g.
``("out", "boiler#1", "heat", s, t)``.  Operational problems use scenario
index ``s = 0``.  Uncertainty enters the operational problem through
demand and PV rows (right-hand side) and, for heat pumps, through
coefficients that are affine in the ambient temperature; both are tracked
as term lists so the instance can be re-evaluated at any realization.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInput, NotApplicable
from .milp import EQ, GE, LE, InstanceBuilder, MilpInstance
from .model import (
    EXTERNAL, Converter, Design, DesignVariable, FixedFraction, HeatPumpLaw, SolarSource, Storage,
    SystemModel, capex_breakpoints, curve_is_convex,
)
from .scenarios import SOLAR, TAMB, Scenario
from .schedule import StorageSchedule

CURTAILMENT = "curtailment"
EQUALITY = "equality"


@dataclass(frozen=True)
class VarMap:
    """Bidirectional map between structured column names and column indices."""

    names: tuple
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        index = {n: j for j, n in enumerate(self.names)}
        if len(index) != len(self.names):
            raise ValueError("column names must be unique")
        object.__setattr__(self, "_index", index)

    def __getitem__(self, key) -> int:
        return self._index[key]

    def __contains__(self, key) -> bool:
        return key in self._index

    def __len__(self) -> int:
        return len(self.names)

    def get(self, key, default=None):
        return self._index.get(key, default)

    def name(self, j: int):
        return self.names[j]

    def of_kind(self, kind: str) -> list:
        return [(n, j) for j, n in enumerate(self.names) if n[0] == kind]


class RhsTerm(NamedTuple):
    row: int
    channel: tuple
    coef: float


class CoefTerm(NamedTuple):
    row: int
    col: int
    channel: tuple
    coef: float


def _census(inst: MilpInstance) -> dict:
    cols = Counter(n[0] if isinstance(n, tuple) else "other" for n in inst.names)
    rows = Counter(n[0] if isinstance(n, tuple) else "other" for n in inst.row_names)
    return {"n_columns": inst.shape[1], "n_rows": inst.shape[0], "n_binaries": inst.n_binaries,
            "columns": dict(sorted(cols.items())), "rows": dict(sorted(rows.items()))}


@dataclass(frozen=True, eq=False)
class CompiledOperational:
    """Operational feasibility problem ``min phi`` for a fixed design.

    ``instance`` is evaluated at ``scenario``.  ``base`` is the same problem
    with every uncertain contribution removed; :meth:`at` adds the tracked
    terms back for any other realization.
    """

    instance: MilpInstance
    varmap: VarMap
    base: MilpInstance
    rhs_terms: tuple
    coef_terms: tuple
    model: SystemModel
    design: Design
    scenario: Scenario
    balance_mode: str = CURTAILMENT
    reformulated: frozenset = frozenset()

    @property
    def phi(self) -> int:
        return self.varmap[("phi",)]

    @property
    def channels(self) -> list:
        """Uncertainty channels ``(name, t)`` that the problem depends on, sorted."""
        return sorted({t.channel for t in self.rhs_terms} | {t.channel for t in self.coef_terms},
                      key=lambda k: (k[0], k[1]))

    def values_of(self, scenario: Scenario) -> dict:
        return {ch: scenario.value(ch) for ch in self.channels}

    def at(self, values) -> MilpInstance:
        """The instance at a realization given as a :class:`Scenario` or a ``{channel: value}`` map."""
        if isinstance(values, Scenario):
            values = self.values_of(values)
        base = self.base
        rhs = base.rhs.copy()
        for r, ch, coef in self.rhs_terms:
            rhs[r] += coef * values[ch]
        A = base.A
        if self.coef_terms:
            rows = [t.row for t in self.coef_terms]
            cols = [t.col for t in self.coef_terms]
            vals = [t.coef * values[t.channel] for t in self.coef_terms]
            A = (A + sp.csr_matrix((vals, (rows, cols)), shape=A.shape)).tocsr()
        return MilpInstance(base.c, A, base.senses, rhs, base.lb, base.ub, base.integrality,
                            base.names, base.row_names, base.offset)

    def schedule(self, x) -> dict:
        """Column values keyed by structured name."""
        return {n: float(v) for n, v in zip(self.varmap.names, np.asarray(x, dtype=float))}

    def storage_schedules(self, x) -> dict:
        """:class:`StorageSchedule` per installed storage instance, with its balance aggregate."""
        sched = self.schedule(x)
        T = self.scenario.n_steps
        dt = self.model.economics.delta_t
        out = {}
        for inst, comp in self.model.instances():
            if not isinstance(comp, Storage) or not self.design.installed(inst):
                continue
            E = self.design.capacity(inst)
            level = [sched[("level", inst, 0, t)] for t in range(T)]
            inflow = [sched[("sto_in", inst, 0, t)] for t in range(T)]
            outflow = [sched[("sto_out", inst, 0, t)] for t in range(T)]
            agg = _balance_values(self.model, self.design, self.scenario, sched)[comp.form]
            agg = agg - np.array(inflow) + np.array(outflow)
            out[inst] = StorageSchedule(level, inflow, outflow, comp.eta_in, comp.eta_out, comp.tau, dt,
                                        E, E, comp.gamma_sto * E, None, agg)
        return out

    def census(self) -> dict:
        d = _census(self.instance)
        d["uncertain_rows"] = len({t.row for t in self.rhs_terms} | {t.row for t in self.coef_terms})
        d["rhs_terms"] = len(self.rhs_terms)
        d["coef_terms"] = len(self.coef_terms)
        return d


def census(inst: MilpInstance) -> dict:
    """Row/column counts per kind, for golden files."""
    return _census(inst)


# ---------------------------------------------------------------- building blocks


def glover_linearize(builder: InstanceBuilder, b: int, v: int, lower: float, upper: float, name) -> int:
    """Add ``w = b * v`` for binary column ``b`` and continuous ``v`` in ``[lower, upper]``; return ``w``."""
    if not (np.isfinite(lower) and np.isfinite(upper)):
        raise InvalidInput("Glover linearization needs finite bounds on the continuous factor")
    w = builder.add_var(name, lb=min(0.0, lower), ub=max(0.0, upper))
    builder.add_row({w: 1.0, b: -upper}, LE, 0.0, ("glover_ub",) + name[1:])
    builder.add_row({w: 1.0, b: -lower}, GE, 0.0, ("glover_lb",) + name[1:])
    builder.add_row({w: 1.0, v: -1.0, b: -lower}, LE, -lower, ("glover_v_ub",) + name[1:])
    builder.add_row({w: 1.0, v: -1.0, b: -upper}, GE, -upper, ("glover_v_lb",) + name[1:])
    return w


def _inverse_eta(eta, t_amb: float) -> tuple:
    """(constant part, temperature slope) of 1/eta at ambient ``t_amb``; slope is 0 for constants."""
    if isinstance(eta, HeatPumpLaw):
        eta(t_amb)  # raises SingularEfficiency when t_amb >= t_hp
        return eta.inverse_affine()
    return 1.0 / float(eta), 0.0


def _segment_data(curve, ratio):
    lo, li = np.array(curve.lambda_out), np.array(curve.lambda_in)
    beta = np.array(curve.slopes)
    kappa = li[:-1] - beta * lo[:-1]
    return lo * ratio, kappa * ratio, beta


class _Terms:
    def __init__(self):
        self.rhs: list = []
        self.coef: list = []


def _converter_block(bld, terms, conv: Converter, inst: str, s: int, t: int, t_amb: float,
                     capacity, reformulate: bool = False):
    """Part-load rows for one converter instance at one timestep.

    ``capacity`` is a float (operational problem) or a callable
    ``j -> column`` giving the Glover product ``b_j * E_nom`` (design problem).
    Returns the column of the input flow and the output columns per form.
    """
    J = conv.outputs[0].curve.n_segments
    fixed = not callable(capacity)
    in_col = bld.add_var(("in", inst, s, t), 0.0, np.inf)
    outs = {}
    if reformulate:
        return _convex_block(bld, terms, conv, inst, s, t, t_amb, capacity, in_col)
    bs = [bld.add_var(("b_eff", inst, s, t, j), binary=True) for j in range(J)]
    bld.add_row({b: 1.0 for b in bs}, LE, 1.0, ("one_segment", inst, s, t))
    w = bs if fixed else [capacity(j, bs[j]) for j in range(J)]
    scale = float(capacity) if fixed else 1.0
    for k, o in enumerate(conv.outputs):
        lo, kappa, beta = _segment_data(o.curve, o.nominal_ratio)
        a, slope = _inverse_eta(conv.output_eta(k), t_amb)
        ub = lo[-1] * (scale if fixed else conv.capacity_bounds[1])
        out = bld.add_var(("out", inst, o.form, s, t), 0.0, ub)
        outs.setdefault(o.form, []).append(out)
        segs = [bld.add_var(("out_seg", inst, o.form, s, t, j), 0.0, lo[j + 1] * ub / lo[-1]) for j in range(J)]
        bld.add_row([(out, 1.0)] + [(c, -1.0) for c in segs], EQ, 0.0, ("out_sum", inst, o.form, s, t))
        for j in range(J):
            bld.add_row({segs[j]: 1.0, w[j]: -lo[j + 1] * scale}, LE, 0.0, ("seg_ub", inst, o.form, s, t, j))
            bld.add_row({segs[j]: 1.0, w[j]: -lo[j] * scale}, GE, 0.0, ("seg_lb", inst, o.form, s, t, j))
        # in = sum_j kappa_j E/eta b_j + beta_j/eta seg_j  with 1/eta = a + slope*T
        inv = a + slope * t_amb
        if fixed and slope != 0.0:
            coeffs = {in_col: 1.0}
            for j in range(J):
                coeffs[w[j]] = coeffs.get(w[j], 0.0) - kappa[j] * scale * a
                coeffs[segs[j]] = -beta[j] * a
            r = bld.add_row(coeffs, EQ, 0.0, ("in_def", inst, o.form, s, t))
            for j in range(J):
                if kappa[j] != 0.0:
                    terms.coef.append((r, w[j], (TAMB, t), -kappa[j] * scale * slope))
                if beta[j] != 0.0:
                    terms.coef.append((r, segs[j], (TAMB, t), -beta[j] * slope))
        else:
            coeffs = [(in_col, 1.0)]
            coeffs += [(w[j], -kappa[j] * scale * inv) for j in range(J)]
            coeffs += [(segs[j], -beta[j] * inv) for j in range(J)]
            bld.add_row(coeffs, EQ, 0.0, ("in_def", inst, o.form, s, t))
    return in_col, outs


def _curve_at_origin(curve) -> bool:
    return curve.breakpoints[0] == (0.0, 0.0)


def _convex_block(bld, terms, conv, inst, s, t, t_amb, capacity, in_col):
    """Max-form part-load rows: ``in >= line_j(out)`` for every segment ``j``.

    The on/off state survives as a single binary unless every curve starts at
    the origin, in which case "off" is the curve's own endpoint and the block
    is purely linear.
    """
    E = float(capacity)
    o = conv.outputs[0]
    lo, kappa, beta = _segment_data(o.curve, o.nominal_ratio)
    a, slope = _inverse_eta(conv.output_eta(0), t_amb)
    out = bld.add_var(("out", inst, o.form, s, t), 0.0, lo[-1] * E)
    if _curve_at_origin(o.curve):
        on = None
    else:
        on = bld.add_var(("b_on", inst, s, t), binary=True)
        bld.add_row({out: 1.0, on: -lo[-1] * E}, LE, 0.0, ("on_ub", inst, o.form, s, t))
        bld.add_row({out: 1.0, on: -lo[0] * E}, GE, 0.0, ("on_lb", inst, o.form, s, t))
    for j in range(len(beta)):
        # in - beta_j/eta out - kappa_j E/eta on >= 0
        coeffs = {in_col: 1.0, out: -beta[j] * a}
        rhs = 0.0
        if on is None:
            rhs = kappa[j] * E * a
        else:
            coeffs[on] = -kappa[j] * E * a
        r = bld.add_row(coeffs, GE, rhs, ("in_line", inst, o.form, s, t, j))
        if slope != 0.0:
            if beta[j] != 0.0:
                terms.coef.append((r, out, (TAMB, t), -beta[j] * slope))
            if kappa[j] != 0.0:
                if on is None:
                    terms.rhs.append((r, (TAMB, t), kappa[j] * E * slope))
                else:
                    terms.coef.append((r, on, (TAMB, t), -kappa[j] * E * slope))
    return in_col, {o.form: [out]}


def _storage_block(bld, sto: Storage, inst: str, s: int, T: int, dt: float, capacity, init):
    """Storage columns and rows over the whole horizon.

    ``capacity``/``init`` are floats in the operational problem; in the design
    problem they are columns (``init`` ``None`` for a fixed fraction).
    Returns (in columns, out columns).
    """
    fixed = not isinstance(capacity, _Col)
    E = float(capacity) if fixed else None
    level_ub = sto.gamma_sto * (E if fixed else sto.capacity_bounds[1])
    flow_ub = E if fixed else sto.capacity_bounds[1]
    lv = [bld.add_var(("level", inst, s, t), 0.0, level_ub) for t in range(T)]
    fin = [bld.add_var(("sto_in", inst, s, t), 0.0, flow_ub) for t in range(T)]
    fout = [bld.add_var(("sto_out", inst, s, t), 0.0, flow_ub) for t in range(T)]
    if not fixed:
        for t in range(T):
            bld.add_row({lv[t]: 1.0, capacity.j: -sto.gamma_sto}, LE, 0.0, ("level_cap", inst, s, t))
            bld.add_row({fin[t]: 1.0, capacity.j: -1.0}, LE, 0.0, ("in_cap", inst, s, t))
            bld.add_row({fout[t]: 1.0, capacity.j: -1.0}, LE, 0.0, ("out_cap", inst, s, t))
    loss = 1.0 + dt / sto.tau
    for t in range(T):
        prev = lv[t - 1]  # t = 0 wraps to the last step
        coeffs = {lv[t]: loss, fin[t]: -dt * sto.eta_in, fout[t]: dt / sto.eta_out}
        coeffs[prev] = coeffs.get(prev, 0.0) - 1.0
        bld.add_row(coeffs, EQ, 0.0, ("dynamics", inst, s, t))
    if fixed:
        bld.add_row({lv[0]: 1.0}, EQ, float(init), ("initial_level", inst, s))
    elif isinstance(init, _Col):
        bld.add_row({lv[0]: 1.0, init.j: -1.0}, EQ, 0.0, ("initial_level", inst, s))
    else:
        bld.add_row({lv[0]: 1.0, capacity.j: -init * sto.gamma_sto}, EQ, 0.0, ("initial_level", inst, s))
    return fin, fout


@dataclass(frozen=True)
class _Col:
    j: int


def _check_scenarios(scenarios) -> int:
    if not scenarios:
        raise InvalidInput("at least one scenario is required")
    T = scenarios[0].n_steps
    if T < 1 or any(s.n_steps != T for s in scenarios):
        raise InvalidInput("all scenarios must have the same positive number of timesteps")
    return T


def _initial_fraction(sto: Storage):
    return sto.init_policy.fraction if isinstance(sto.init_policy, FixedFraction) else None


# ---------------------------------------------------------------- operational problem


def build_operational_milp(model: SystemModel, design: Design, scenario: Scenario, *,
                           balance: str = CURTAILMENT, reformulate=()) -> CompiledOperational:
    """``min phi`` subject to every energy balance being at most ``phi`` for a fixed design.

    Converters named in ``reformulate`` (instance names) use the max-form
    part-load rows instead of segment binaries; see :func:`pwl_convex_reformulate`.
    ``balance="equality"`` emits ``|balance| <= phi`` rows for inspection of
    the no-curtailment gap; that variant is not meant to be solved by the
    verification routines.
    """
    if balance not in (CURTAILMENT, EQUALITY):
        raise InvalidInput(f"unknown balance mode {balance!r}")
    missing = [inst for inst, _ in model.instances() if inst not in design.capacities]
    if missing:
        raise InvalidInput(f"design has no capacity for {missing[0]!r}")
    reformulate = frozenset(reformulate)
    T = scenario.n_steps
    dt = model.economics.delta_t
    bld = InstanceBuilder()
    terms = _Terms()
    phi = bld.add_var(("phi",), -np.inf, np.inf, obj=1.0)
    supply = {(e, t): [] for e in model.form_ids for t in range(T)}
    use = {(e, t): [] for e in model.form_ids for t in range(T)}

    for conv in model.converters:
        for inst in model.copies(conv):
            E = design.capacity(inst)
            if E <= 0.0:
                continue
            for t in range(T):
                in_col, outs = _converter_block(bld, terms, conv, inst, 0, t, float(scenario.t_amb[t]), E,
                                                reformulate=inst in reformulate)
                if conv.input != EXTERNAL:
                    use[(conv.input, t)].append(in_col)
                for form, cols in outs.items():
                    supply[(form, t)].extend(cols)
    for sto in model.storages:
        for inst in model.copies(sto):
            E = design.capacity(inst)
            if E <= 0.0:
                continue
            frac = _initial_fraction(sto)
            if frac is None:
                if inst not in design.initial_levels:
                    raise InvalidInput(f"design has no initial level for storage {inst!r}")
                init = design.initial_levels[inst]
            else:
                init = frac * sto.gamma_sto * E
            fin, fout = _storage_block(bld, sto, inst, 0, T, dt, E, init)
            for t in range(T):
                use[(sto.form, t)].append(fin[t])
                supply[(sto.form, t)].append(fout[t])
    for pv in model.solar:
        for inst in model.copies(pv):
            E = design.capacity(inst)
            if E <= 0.0:
                continue
            for t in range(T):
                col = bld.add_var(("pv", inst, 0, t), 0.0, np.inf)
                r = bld.add_row({col: 1.0}, LE, 0.0, ("pv_cf", inst, 0, t))
                terms.rhs.append((r, (SOLAR, t), E))
                supply[(pv.form, t)].append(col)

    for e in model.form_ids:
        for t in range(T):
            coeffs = [(c, 1.0) for c in use[(e, t)]] + [(c, -1.0) for c in supply[(e, t)]]
            r = bld.add_row(coeffs + [(phi, -1.0)], LE, 0.0, ("balance", e, 0, t))
            terms.rhs.append((r, (e, t), -1.0))
            if balance == EQUALITY:
                neg = [(c, -v) for c, v in coeffs]
                r = bld.add_row(neg + [(phi, -1.0)], LE, 0.0, ("balance_neg", e, 0, t))
                terms.rhs.append((r, (e, t), 1.0))

    base = bld.build()
    compiled = CompiledOperational(
        instance=base, varmap=VarMap(base.names), base=base,
        rhs_terms=tuple(RhsTerm(*t) for t in terms.rhs),
        coef_terms=tuple(CoefTerm(*t) for t in terms.coef),
        model=model, design=design, scenario=scenario, balance_mode=balance, reformulated=reformulate,
    )
    return _replace_instance(compiled, compiled.at(scenario))


def _replace_instance(c: CompiledOperational, inst: MilpInstance) -> CompiledOperational:
    return CompiledOperational(inst, c.varmap, c.base, c.rhs_terms, c.coef_terms, c.model, c.design,
                               c.scenario, c.balance_mode, c.reformulated)


def with_scenario(compiled: CompiledOperational, scenario: Scenario) -> CompiledOperational:
    """Same compiled problem re-evaluated at another realization."""
    c = compiled
    moved = CompiledOperational(c.instance, c.varmap, c.base, c.rhs_terms, c.coef_terms, c.model,
                                c.design, scenario, c.balance_mode, c.reformulated)
    return _replace_instance(moved, moved.at(scenario))


def pwl_convex_reformulate(compiled: CompiledOperational, component: str) -> CompiledOperational:
    """Replace segment binaries of a convex-curve converter by max-form rows.

    ``component`` is a converter name (all its copies) or an instance name
    (``name#i``).  The input flow is bounded below by every segment line,
    which equals the curve because the curve is convex and a larger input
    never helps a curtailment balance.
    """
    if compiled.balance_mode != CURTAILMENT:
        raise NotApplicable("the max-form reformulation needs curtailment (<=) balances")
    model = compiled.model
    targets = []
    for conv in model.converters:
        copies = model.copies(conv)
        if component == conv.name:
            targets = [(conv, i) for i in copies]
        elif component in copies:
            targets = [(conv, component)]
        if targets:
            break
    if not targets:
        raise InvalidInput(f"no converter named {component!r}")
    conv = targets[0][0]
    if len(conv.outputs) != 1:
        raise NotApplicable(f"{conv.name}: outputs coupled through one input; reformulate single-output converters only")
    if not curve_is_convex(conv.outputs[0].curve):
        raise NotApplicable(f"{conv.name}: part-load curve is not convex")
    names = compiled.reformulated | {inst for _, inst in targets}
    return build_operational_milp(model, compiled.design, compiled.scenario,
                                  balance=compiled.balance_mode, reformulate=names)


def _balance_values(model: SystemModel, design: Design, scenario: Scenario, sched: dict) -> dict:
    """Per form, the array over t of demand + consumption - supply for a schedule."""
    T = scenario.n_steps
    g = lambda key: float(sched.get(key, 0.0))  # noqa: E731
    bal = {e: scenario.demand(e).astype(float).copy() for e in model.form_ids}
    for conv in model.converters:
        for inst in model.copies(conv):
            if not design.installed(inst):
                continue
            for t in range(T):
                if conv.input != EXTERNAL:
                    bal[conv.input][t] += g(("in", inst, 0, t))
                for o in conv.outputs:
                    bal[o.form][t] -= g(("out", inst, o.form, 0, t))
    for sto in model.storages:
        for inst in model.copies(sto):
            if not design.installed(inst):
                continue
            for t in range(T):
                bal[sto.form][t] += g(("sto_in", inst, 0, t)) - g(("sto_out", inst, 0, t))
    for pv in model.solar:
        for inst in model.copies(pv):
            if not design.installed(inst):
                continue
            for t in range(T):
                bal[pv.form][t] -= g(("pv", inst, 0, t))
    return bal


def energy_gap(model: SystemModel, design: Design, scenario: Scenario, schedule: dict) -> float:
    """Largest energy-balance violation of a schedule over all forms and timesteps (no solve)."""
    bal = _balance_values(model, design, scenario, schedule)
    vals = [float(np.max(v)) for v in bal.values() if v.size]
    return max(vals) if vals else 0.0


# ---------------------------------------------------------------- design problem


def build_design_milp(model: SystemModel, scenarios, *, symmetry_breaking: bool = True):
    """Multi-scenario design MILP minimizing annualized capex plus weighted fuel cost.

    Returns ``(instance, varmap)``.  With ``symmetry_breaking`` identical
    copies are ordered by capacity, which removes equivalent solutions
    without changing the optimum.
    """
    scenarios = list(scenarios)
    T = _check_scenarios(scenarios)
    econ = model.economics
    dt = econ.delta_t
    bld = InstanceBuilder()
    terms = _Terms()  # unused here; all parameters are numbers in the design problem
    cap_cols = {}

    for inst, comp in model.instances():
        lo_cap, hi_cap = comp.capacity_bounds
        capex = bld.add_var(("capex", inst), 0.0, np.inf, obj=1.0 / econ.gamma_pvf + comp.maintenance_factor)
        E = bld.add_var(("E_nom", inst), 0.0, hi_cap)
        bex = bld.add_var(("b_ex", inst), binary=True)
        cap_cols[inst] = E
        bld.add_row({E: 1.0, bex: -hi_cap}, LE, 0.0, ("cap_max", inst))
        bld.add_row({E: 1.0, bex: -lo_cap}, GE, 0.0, ("cap_min", inst))
        pts = capex_breakpoints(comp)
        segs, bins = [], []
        coeffs = {capex: 1.0}
        for j in range(len(pts) - 1):
            (e0, c0), (e1, c1) = pts[j], pts[j + 1]
            seg = bld.add_var(("E_nom_seg", inst, j), 0.0, e1)
            b = bld.add_var(("b_capex", inst, j), binary=True)
            segs.append(seg)
            bins.append(b)
            bld.add_row({seg: 1.0, b: -e1}, LE, 0.0, ("capex_seg_ub", inst, j))
            bld.add_row({seg: 1.0, b: -e0}, GE, 0.0, ("capex_seg_lb", inst, j))
            slope = (c1 - c0) / (e1 - e0)
            coeffs[b] = coeffs.get(b, 0.0) - (c0 - slope * e0)
            coeffs[seg] = -slope
        bld.add_row(coeffs, EQ, 0.0, ("capex_def", inst))
        bld.add_row([(E, 1.0)] + [(c, -1.0) for c in segs], EQ, 0.0, ("capex_seg_sum", inst))
        bld.add_row([(b, 1.0) for b in bins] + [(bex, -1.0)], EQ, 0.0, ("capex_one", inst))
        if isinstance(comp, Storage) and isinstance(comp.init_policy, DesignVariable):
            init = bld.add_var(("E_init", inst), 0.0, comp.gamma_sto * hi_cap)
            bld.add_row({init: 1.0, E: -comp.gamma_sto}, LE, 0.0, ("init_cap", inst))

    if symmetry_breaking:
        for comp in (*model.converters, *model.storages, *model.solar):
            names = model.copies(comp)
            for a, b in zip(names, names[1:]):
                bld.add_row({cap_cols[a]: 1.0, cap_cols[b]: -1.0}, GE, 0.0, ("copy_order", a, b))
                bld.add_row({bld.col(("b_ex", a)): 1.0, bld.col(("b_ex", b)): -1.0}, GE, 0.0,
                            ("copy_order_ex", a, b))

    for s, sc in enumerate(scenarios):
        weight = float(sc.weight)
        supply = {(e, t): [] for e in model.form_ids for t in range(T)}
        use = {(e, t): [] for e in model.form_ids for t in range(T)}
        for conv in model.converters:
            hi_cap = conv.capacity_bounds[1]
            for inst in model.copies(conv):
                E = cap_cols[inst]
                for t in range(T):
                    def product(j, b, inst=inst, E=E, s=s, t=t):
                        return glover_linearize(bld, b, E, 0.0, hi_cap, ("glover", inst, s, t, j))

                    in_col, outs = _converter_block(bld, terms, conv, inst, s, t, float(sc.t_amb[t]), product)
                    if conv.input == EXTERNAL:
                        bld.add_obj(in_col, weight * econ.gamma_fuel * dt)
                    else:
                        use[(conv.input, t)].append(in_col)
                    for form, cols in outs.items():
                        supply[(form, t)].extend(cols)
        for sto in model.storages:
            for inst in model.copies(sto):
                frac = _initial_fraction(sto)
                init = _Col(bld.col(("E_init", inst))) if frac is None else frac
                fin, fout = _storage_block(bld, sto, inst, s, T, dt, _Col(cap_cols[inst]), init)
                for t in range(T):
                    use[(sto.form, t)].append(fin[t])
                    supply[(sto.form, t)].append(fout[t])
        for pv in model.solar:
            for inst in model.copies(pv):
                for t in range(T):
                    col = bld.add_var(("pv", inst, s, t), 0.0, np.inf)
                    bld.add_row({col: 1.0, cap_cols[inst]: -float(sc.solar_cf[t])}, LE, 0.0, ("pv_cf", inst, s, t))
                    supply[(pv.form, t)].append(col)
        for e in model.form_ids:
            d = sc.demand(e)
            for t in range(T):
                coeffs = [(c, 1.0) for c in use[(e, t)]] + [(c, -1.0) for c in supply[(e, t)]]
                bld.add_row(coeffs, LE, -float(d[t]), ("balance", e, s, t))
    inst = bld.build()
    return inst, VarMap(inst.names)


def design_from_solution(model: SystemModel, varmap: VarMap, x, clean: float = 1e-9) -> Design:
    """Read capacities (and variable initial levels) from a design-MILP solution."""
    x = np.asarray(x, dtype=float)
    caps, levels = {}, {}
    for inst, comp in model.instances():
        v = float(x[varmap[("E_nom", inst)]])
        caps[inst] = 0.0 if abs(v) < clean else v
        key = ("E_init", inst)
        if key in varmap:
            lv = float(x[varmap[key]])
            levels[inst] = 0.0 if abs(lv) < clean else lv
    return Design(caps, levels)


# ---------------------------------------------------------------- LP dual with fixed binaries


class DualSolution(NamedTuple):
    status: str  # "optimal", "dual_unbounded" (primal infeasible) or "dual_infeasible"
    value: float
    lam: np.ndarray | None


@dataclass(frozen=True, eq=False)
class DualProgram:
    """Operational LP for a fixed binary pattern in the form ``min c'z  s.t.  A_c z <= b``.

    ``b`` already contains ``-A_d zbar``.  Rows come from the original rows
    (``>=`` negated, equalities split into two rows unless ``free`` marks a
    single row with a sign-free multiplier) and from finite column bounds.
    The dual reads ``max b'lam  s.t.  A_c'lam = c,  lam <= 0`` (free entries
    unrestricted).  Uncertain parts of ``A_c`` and ``b`` are kept as terms
    over the channels of the compiled problem.
    """

    A_c: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    free: np.ndarray
    cont_cols: np.ndarray
    pattern: np.ndarray
    rhs_terms: tuple
    coef_terms: tuple
    row_origin: tuple
    offset: float = 0.0

    @property
    def shape(self):
        return self.A_c.shape

    def at(self, values) -> tuple:
        """(A_c, b) at the realization ``values`` (``{channel: value}``)."""
        b = self.b.copy()
        for r, ch, coef in self.rhs_terms:
            b[r] += coef * values[ch]
        A = self.A_c
        if self.coef_terms:
            rows = [t.row for t in self.coef_terms]
            cols = [t.col for t in self.coef_terms]
            vals = [t.coef * values[t.channel] for t in self.coef_terms]
            A = (A + sp.csr_matrix((vals, (rows, cols)), shape=A.shape)).tocsr()
        return A, b

    def dual_instance(self, values) -> MilpInstance:
        """``min -b'lam  s.t.  A_c'lam = c``, lam <= 0 (free rows unrestricted)."""
        A, b = self.at(values)
        m = A.shape[0]
        ub = np.where(self.free, np.inf, 0.0)
        return MilpInstance(-b, A.T.tocsr(), (EQ,) * A.shape[1], self.c, np.full(m, -np.inf), ub,
                            np.zeros(m, dtype=bool))

    def primal_instance(self, values) -> MilpInstance:
        A, b = self.at(values)
        senses = tuple(EQ if f else LE for f in self.free)
        n = A.shape[1]
        return MilpInstance(self.c, A, senses, b, np.full(n, -np.inf), np.full(n, np.inf),
                            np.zeros(n, dtype=bool), offset=self.offset)

    def solve(self, values, backend=None) -> DualSolution:
        from .milp import Status, solve_lp

        sol = solve_lp(self.dual_instance(values), backend=backend)
        if sol.status is Status.UNBOUNDED:
            return DualSolution("dual_unbounded", np.inf, None)
        if sol.status is Status.INFEASIBLE:
            return DualSolution("dual_infeasible", -np.inf, None)
        return DualSolution("optimal", -sol.objective + self.offset, sol.x)

    def dual_value(self, lam, values) -> float:
        _, b = self.at(values)
        return float(b @ lam) + self.offset

    def dual_residual(self, lam, values) -> float:
        A, _ = self.at(values)
        return float(np.max(np.abs(A.T @ lam - self.c), initial=0.0))


def form_dual(compiled: CompiledOperational, fixed_binaries, *, split_equalities: bool = True) -> DualProgram:
    """Dual data of the operational LP obtained by fixing every binary to ``fixed_binaries``.

    ``fixed_binaries`` is an array over the binary columns (in column order)
    or a full-length primal vector from which the binary entries are read.
    """
    if compiled.balance_mode != CURTAILMENT:
        raise NotApplicable("dual formation is only provided for curtailment balances")
    base = compiled.base
    m, n = base.shape
    ints = base.integrality
    bin_idx = np.flatnonzero(ints)
    z = np.asarray(fixed_binaries, dtype=float).reshape(-1)
    if z.size == n:
        z = z[bin_idx]
    if z.size != bin_idx.size:
        raise InvalidInput(f"pattern has {z.size} entries, the problem has {bin_idx.size} binaries")
    z = np.round(z)
    cont = np.flatnonzero(~ints)
    cpos = -np.ones(n, dtype=int)
    cpos[cont] = np.arange(cont.size)
    zfull = np.zeros(n)
    zfull[bin_idx] = z

    A = base.A
    A_cont = A[:, cont]
    rhs_fixed = base.rhs - A @ zfull

    # derived rows: (source row, sign) for constraint rows, then bound rows
    src, sign, free = [], [], []
    for r, s in enumerate(base.senses):
        if s == LE:
            src.append(r); sign.append(1.0); free.append(False)
        elif s == GE:
            src.append(r); sign.append(-1.0); free.append(False)
        elif split_equalities:
            src += [r, r]; sign += [1.0, -1.0]; free += [False, False]
        else:
            src.append(r); sign.append(1.0); free.append(True)
    src = np.array(src, dtype=int)
    sign = np.array(sign)
    D = sp.diags(sign)
    blocks = [D @ A_cont[src]]
    b_parts = [sign * rhs_fixed[src]]
    origin = [("row", int(r), float(g)) for r, g in zip(src, sign)]
    lb, ub = base.lb[cont], base.ub[cont]
    lbi = np.flatnonzero(np.isfinite(lb))
    ubi = np.flatnonzero(np.isfinite(ub))
    nc = cont.size
    if lbi.size:
        blocks.append(sp.csr_matrix((-np.ones(lbi.size), (np.arange(lbi.size), lbi)), shape=(lbi.size, nc)))
        b_parts.append(-lb[lbi])
        origin += [("lb", int(cont[j]), -1.0) for j in lbi]
    if ubi.size:
        blocks.append(sp.csr_matrix((np.ones(ubi.size), (np.arange(ubi.size), ubi)), shape=(ubi.size, nc)))
        b_parts.append(ub[ubi])
        origin += [("ub", int(cont[j]), 1.0) for j in ubi]
    A_c = sp.vstack(blocks).tocsr()
    b = np.concatenate(b_parts)
    free_mask = np.concatenate([np.array(free, dtype=bool), np.zeros(lbi.size + ubi.size, dtype=bool)])

    derived = {}
    for i, r in enumerate(src):
        derived.setdefault(int(r), []).append(i)
    rhs_terms, coef_terms = [], []
    for r, ch, coef in compiled.rhs_terms:
        for i in derived[r]:
            rhs_terms.append(RhsTerm(i, ch, sign[i] * coef))
    for r, col, ch, coef in compiled.coef_terms:
        for i in derived[r]:
            if ints[col]:
                if zfull[col] != 0.0:
                    rhs_terms.append(RhsTerm(i, ch, -sign[i] * coef * zfull[col]))
            else:
                coef_terms.append(CoefTerm(i, int(cpos[col]), ch, sign[i] * coef))
    offset = float(base.c @ zfull + base.offset)
    return DualProgram(A_c, b, base.c[cont].copy(), free_mask, cont, z, tuple(rhs_terms), tuple(coef_terms),
                       tuple(origin), offset)
