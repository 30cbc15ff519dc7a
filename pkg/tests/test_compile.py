import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robustmes.compile import (
    EQUALITY, build_design_milp, build_operational_milp, census, design_from_solution, energy_gap, form_dual,
    glover_linearize, pwl_convex_reformulate,
)
from robustmes.errors import InvalidInput, NotApplicable
from robustmes.milp import GE, LE, InstanceBuilder, solve_lp, solve_milp
from robustmes.model import (
    DEFAULT_CURVES, Converter, ConverterOutput, Design, Economics, HeatPumpLaw, PwlCurve, SystemModel,
)
from robustmes.scenarios import Scenario
from robustmes import examples

from conftest import LINEAR, supply_model


def boiler_model(copies=1):
    b = Converter("boiler", "external", (ConverterOutput("heat", DEFAULT_CURVES["boiler"]),), eta_nom=0.9,
                  capacity_bounds=(0.0, 500.0))
    return SystemModel(("heat",), (b,), n_copies=copies)


def phi_of(compiled):
    sol = solve_milp(compiled.instance)
    assert sol.optimal
    return sol


# ---------------------------------------------------------------- design MILP

def test_design_census_boiler():
    inst, vm = build_design_milp(boiler_model(), [Scenario.constant({"heat": 50.0}, 2)])
    c = census(inst)
    # capex, E_nom, b_ex, one capex segment (E_nom_seg, b_capex);
    # per step: in, b_eff, Glover product, out, out_seg
    assert c["n_columns"] == 3 + 2 + 2 * 5
    assert c["n_binaries"] == 2 + 2
    assert c["columns"] == {"E_nom": 1, "E_nom_seg": 1, "b_capex": 1, "b_eff": 2, "b_ex": 1, "capex": 1,
                            "glover": 2, "in": 2, "out": 2, "out_seg": 2}
    # cap_max/min, capex segment bounds, capex_def/seg_sum/one;
    # per step: one_segment, 4 Glover rows, out_sum, seg_ub, seg_lb, in_def; one balance per step
    assert c["n_rows"] == 2 + 2 + 3 + 2 * 9 + 2
    assert c["rows"]["balance"] == 2 and c["rows"]["glover_ub"] == 2


def test_design_zero_demand_installs_nothing():
    inst, vm = build_design_milp(boiler_model(2), [Scenario.constant({"heat": 0.0}, 3)])
    sol = solve_milp(inst)
    assert sol.objective == pytest.approx(0.0, abs=1e-9)
    d = design_from_solution(boiler_model(2), vm, sol.x)
    assert all(v == 0.0 for v in d.capacities.values())


def test_design_weight_consistency():
    model = boiler_model()
    econ = model.economics
    day = Scenario.constant({"heat": 100.0}, 2, weight=365.0)
    inst, vm = build_design_milp(model, [day])
    sol = solve_milp(inst)
    E = sol.x[vm[("E_nom", "boiler#1")]]
    capex = sol.x[vm[("capex", "boiler#1")]]
    fuel = sum(sol.x[vm[("in", "boiler#1", 0, t)]] for t in range(2)) * econ.gamma_fuel * econ.delta_t
    assert E == pytest.approx(100.0, rel=1e-9)
    assert sol.objective == pytest.approx(capex / econ.gamma_pvf + 365.0 * fuel, rel=1e-9)
    # one-day fuel cost: input at full load is 0.996 * 100 / 0.9 per step
    assert fuel == pytest.approx(2 * 0.996 * 100 / 0.9 * econ.gamma_fuel * econ.delta_t, rel=1e-9)


def test_design_rejects_mismatched_horizons():
    with pytest.raises(InvalidInput):
        build_design_milp(boiler_model(), [Scenario.constant({"heat": 1.0}, 2), Scenario.constant({"heat": 1.0}, 3)])


def test_gamma_pvf_in_objective():
    assert Economics().gamma_pvf == pytest.approx(3.31213, abs=5e-6)


# ---------------------------------------------------------------- operational MILP

def test_undersized_single_converter():
    model = supply_model()
    c = build_operational_milp(model, Design({"src#1": 8.0}), Scenario.constant({"f": 10.0}, 1))
    assert phi_of(c).objective == pytest.approx(2.0)


def test_oversized_is_feasible():
    ex = examples.pipeline()
    design = Design({"boiler#1": 1e4, "chp#1": 1e4, "tes_heat#1": 1e3})
    sc = Scenario.constant({"heat": 350.0, "electricity": 120.0}, 4)
    assert phi_of(build_operational_milp(ex.model, design, sc)).objective <= 1e-9


def test_missing_capacity_rejected():
    with pytest.raises(InvalidInput):
        build_operational_milp(supply_model(), Design({}), Scenario.constant({"f": 1.0}, 1))


@pytest.mark.parametrize("name", ["min_part_load", "nonconvex", "heat_pump"])
def test_energy_gap_roundtrip(name):
    ex = examples.BUILDERS[name]()
    rng = np.random.default_rng(0)
    for _ in range(5):
        theta = rng.dirichlet(np.ones(ex.hull.n_generators))
        base = ex.base or Scenario.constant({}, 1 + max(t for _, t in ex.hull.keys))
        sc = ex.hull.scenario(theta, base)
        c = build_operational_milp(ex.model, ex.design, sc)
        sol = phi_of(c)
        assert energy_gap(ex.model, ex.design, sc, c.schedule(sol.x)) == pytest.approx(sol.objective, abs=1e-7)


def test_energy_gap_direct():
    model = supply_model()
    d = Design({"src#1": 8.0})
    assert energy_gap(model, d, Scenario.constant({"f": 0.0}, 1), {}) == 0.0
    assert energy_gap(model, d, Scenario.constant({"f": 10.0}, 1), {("out", "src#1", "f", 0, 0): 8.0}) == 2.0


def test_storage_cyclic_and_initial_level():
    ex = examples.pipeline()
    design = Design({"boiler#1": 100.0, "chp#1": 0.0, "tes_heat#1": 50.0})
    sc = Scenario.constant({"heat": np.array([80.0, 120.0, 60.0, 100.0])}, 4)
    c = build_operational_milp(ex.model, design, sc)
    sol = phi_of(c)
    s = c.storage_schedules(sol.x)["tes_heat#1"]
    assert np.max(np.abs(s.dynamics_residual())) <= 1e-8
    assert s.level[0] == pytest.approx(0.5 * 1.0 * 50.0)


# ---------------------------------------------------------------- Glover

def _glover_instance(b_val, v_val, lo, hi):
    bld = InstanceBuilder()
    b = bld.add_var("b", b_val, b_val)
    v = bld.add_var("v", v_val, v_val)
    w = glover_linearize(bld, b, v, lo, hi, ("glover", "x", 0, 0, 0))
    return bld, w


@pytest.mark.parametrize("b_val,v_val", list(itertools.product((0.0, 1.0), (0.0, 2.5, 7.0, 10.0))))
def test_glover_exact_projection(b_val, v_val):
    bld, w = _glover_instance(b_val, v_val, 0.0, 10.0)
    for sense in (1.0, -1.0):
        bld.set_obj(w, sense)
        sol = solve_lp(bld.build())
        assert sol.x[w] == pytest.approx(b_val * v_val, abs=1e-9)


def test_glover_needs_bounds():
    bld = InstanceBuilder()
    b, v = bld.add_var("b", binary=True), bld.add_var("v")
    with pytest.raises(InvalidInput):
        glover_linearize(bld, b, v, 0.0, np.inf, ("glover", "x", 0, 0, 0))


# ---------------------------------------------------------------- convex reformulation

def ac_model():
    ac = Converter("ac", "external", (ConverterOutput("cool", DEFAULT_CURVES["absorption_chiller"]),),
                   capacity_bounds=(0.0, 1e3))
    return SystemModel(("cool",), (ac,), n_copies=1, economics=Economics(gamma_fuel=0.0, delta_t=1.0))


def test_ac_breakpoint_input():
    model = ac_model()
    sc = Scenario.constant({"cool": 60.0}, 1)
    design = Design({"ac#1": 100.0})
    for compiled in (build_operational_milp(model, design, sc),
                     pwl_convex_reformulate(build_operational_milp(model, design, sc), "ac")):
        inst = compiled.instance
        vm = compiled.varmap
        lb, ub = inst.lb.copy(), inst.ub.copy()
        j = vm[("out", "ac#1", "cool", 0, 0)]
        lb[j] = ub[j] = 60.0
        inst = inst.with_bounds(lb, ub)
        # minimal input at output 60 kW (lambda_out = 0.6)
        c = np.zeros(inst.shape[1])
        c[vm[("in", "ac#1", 0, 0)]] = 1.0
        from robustmes.milp import MilpInstance
        sol = solve_milp(MilpInstance(c, inst.A, inst.senses, inst.rhs, inst.lb, inst.ub, inst.integrality))
        assert sol.objective == pytest.approx(47.8, abs=1e-9)


def test_reformulation_refusals():
    bad = PwlCurve(((0.2, 0.1), (0.6, 0.9), (1.0, 1.0)))
    model = supply_model(curve=bad)
    c = build_operational_milp(model, Design({"src#1": 10.0}), Scenario.constant({"f": 5.0}, 1))
    with pytest.raises(NotApplicable):
        pwl_convex_reformulate(c, "src")
    eq = build_operational_milp(ac_model(), Design({"ac#1": 10.0}), Scenario.constant({"cool": 5.0}, 1),
                                balance=EQUALITY)
    with pytest.raises(NotApplicable):
        pwl_convex_reformulate(eq, "ac")


def test_reformulation_drops_segment_binaries():
    c = build_operational_milp(ac_model(), Design({"ac#1": 10.0}), Scenario.constant({"cool": 5.0}, 2))
    r = pwl_convex_reformulate(c, "ac")
    assert not any(n[0] in ("b_eff", "out_seg") for n in r.varmap.names)
    assert sum(1 for n in r.instance.row_names if n[0] == "in_line") == 2 * 2


def random_convex_curve(rng, origin):
    n = int(rng.integers(2, 4))
    lo = np.sort(rng.uniform(0.0 if origin else 0.1, 0.9, n - 1))
    xs = np.concatenate([[0.0] if origin else lo[:1], lo[1:] if not origin else lo, [1.0]])
    xs = np.unique(np.round(xs, 3))
    slopes = np.sort(rng.uniform(0.3, 1.5, len(xs) - 1))
    y0 = 0.0 if origin else rng.uniform(0.0, 0.3)
    ys = y0 + np.concatenate([[0.0], np.cumsum(slopes * np.diff(xs))])
    return PwlCurve(tuple(zip(xs, ys)))


def convex_equivalence_case(seed):
    """One random convex-curve system; returns (phi MILP, phi reformulated)."""
    rng = np.random.default_rng(seed)
    curve = random_convex_curve(rng, origin=rng.random() < 0.5)
    conv = Converter("u", "f1", (ConverterOutput("f2", curve),), capacity_bounds=(0.0, 1e3))
    src = Converter("s", "external", (ConverterOutput("f1", LINEAR),), capacity_bounds=(0.0, 1e3))
    model = SystemModel(("f1", "f2"), (conv, src), n_copies=1, economics=Economics(gamma_fuel=0.0, delta_t=1.0))
    design = Design({"u#1": float(rng.uniform(5, 20)), "s#1": float(rng.uniform(5, 25))})
    T = 3
    sc = Scenario.constant({"f1": rng.uniform(0, 10, T), "f2": rng.uniform(0, 20, T)}, T)
    c = build_operational_milp(model, design, sc)
    # the linear source passes through the origin, so it always loses its binaries
    r = pwl_convex_reformulate(pwl_convex_reformulate(c, "u"), "s")
    a, b = solve_milp(c.instance), solve_milp(r.instance)
    return a.objective, b.objective, r


@given(st.integers(0, 2**31 - 1))
def test_convex_reformulation_equivalence(seed):
    a, b, r = convex_equivalence_case(seed)
    assert b == pytest.approx(a, rel=1e-6, abs=1e-6)


# ---------------------------------------------------------------- duals

def test_one_row_dual():
    model = supply_model()
    c = build_operational_milp(model, Design({"src#1": 8.0}), Scenario.constant({"f": 10.0}, 1))
    sol = phi_of(c)
    dual = form_dual(c, sol.x)
    res = dual.solve(c.values_of(c.scenario))
    assert res.status == "optimal" and res.value == pytest.approx(2.0)
    assert np.all(res.lam[~dual.free] <= 1e-12)
    assert dual.dual_residual(res.lam, c.values_of(c.scenario)) <= 1e-9


def test_zero_demand_dual_matches():
    ex = examples.min_part_load()
    c = build_operational_milp(ex.model, ex.design, Scenario.constant({"f1": 0.0, "f2": 0.0}, 1))
    sol = phi_of(c)
    res = form_dual(c, sol.x).solve(c.values_of(c.scenario))
    assert sol.objective <= 0
    assert res.value == pytest.approx(sol.objective, abs=1e-6)


def test_pattern_shift_moves_dual_rhs():
    ex = examples.min_part_load()
    c = build_operational_milp(ex.model, ex.design, Scenario.constant({"f1": 5.0, "f2": 5.0}, 1))
    nb = c.instance.n_binaries
    off, on = form_dual(c, np.zeros(nb)), form_dual(c, np.ones(nb))
    bins = np.flatnonzero(c.instance.integrality)
    A_d = c.instance.A[:, bins].toarray()
    # same continuous structure; rhs differs by the binary columns times the pattern change
    assert off.A_c.shape == on.A_c.shape
    assert np.allclose(off.A_c.toarray(), on.A_c.toarray())
    rows = [r for r in range(len(off.row_origin)) if off.row_origin[r][0] == "row"]
    for r in rows:
        _, i, sign = off.row_origin[r][:3]
        assert on.b[r] - off.b[r] == pytest.approx(-sign * A_d[i].sum(), abs=1e-12)


def test_infeasible_pattern_marked():
    ex = examples.min_part_load()
    c = build_operational_milp(ex.model, ex.design, Scenario.constant({"f1": 0.0, "f2": 0.0}, 1))
    nb = c.instance.n_binaries
    res = form_dual(c, np.ones(nb) * 0).solve(c.values_of(c.scenario))
    assert res.status == "optimal"


@given(st.integers(0, 2**31 - 1))
def test_strong_duality_random_patterns(seed):
    ex = examples.min_part_load()
    rng = np.random.default_rng(seed)
    sc = Scenario.constant({"f1": float(rng.uniform(0, 30)), "f2": float(rng.uniform(0, 30))}, 1)
    c = build_operational_milp(ex.model, ex.design, sc)
    z = rng.integers(0, 2, c.instance.n_binaries).astype(float)
    dual = form_dual(c, z)
    res = dual.solve(c.values_of(sc))
    lb, ub = c.instance.lb.copy(), c.instance.ub.copy()
    bins = np.flatnonzero(c.instance.integrality)
    lb[bins] = ub[bins] = z
    primal = solve_lp(c.instance.with_bounds(lb, ub))
    if primal.optimal:
        assert res.value == pytest.approx(primal.objective, abs=1e-6)
    else:
        assert res.status == "dual_unbounded"


# ---------------------------------------------------------------- heat-pump coefficients

def test_heat_pump_coefficients_affine():
    ex = examples.heat_pump()
    temps = [265.0, 275.0, 290.0]
    mats = []
    for ta in temps:
        sc = Scenario.constant({"heat": 30.0}, 2, t_amb=ta)
        mats.append(build_operational_milp(ex.model, ex.design, sc).instance.A.toarray())
    d1, d2 = mats[1] - mats[0], mats[2] - mats[0]
    # collinear: (A(T2) - A(T0)) / (T2 - T0) == (A(T1) - A(T0)) / (T1 - T0) entrywise
    assert np.allclose(d1 / (temps[1] - temps[0]), d2 / (temps[2] - temps[0]), atol=1e-12)
    assert np.abs(d1).max() > 0


def test_heat_pump_input_matches_law():
    ex = examples.heat_pump()
    sc = Scenario.constant({"heat": 30.0}, 1, t_amb=275.0)
    c = build_operational_milp(ex.model, Design({"hp#1": 50.0, "grid#1": 100.0}), sc)
    sol = phi_of(c)
    vm = c.varmap
    out = sol.x[vm[("out", "hp#1", "heat", 0, 0)]]
    inp = sol.x[vm[("in", "hp#1", 0, 0)]]
    eta = HeatPumpLaw(323.15)(275.0)
    # the heat pump curve is the identity from 0.2 to 1 of capacity
    assert inp == pytest.approx(out / eta, rel=1e-9)
