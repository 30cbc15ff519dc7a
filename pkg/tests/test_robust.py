import numpy as np
import pytest

from robustmes.compile import build_operational_milp
from robustmes.errors import InvalidInput, NotConverged
from robustmes.milp import solve_milp
from robustmes.model import DEFAULT_CURVES, Converter, ConverterOutput, Design, SystemModel
from robustmes.robust import CAVEAT, HeuristicConfig, audit_design, feasibility_timestep, max_gap, solve_design
from robustmes.scenarios import DayMatrix, Scenario, synthetic_days


def boiler_model():
    b = Converter("boiler", "external", (ConverterOutput("heat", DEFAULT_CURVES["boiler"]),), eta_nom=0.9,
                  capacity_bounds=(0.0, 500.0))
    return SystemModel(("heat",), (b,), n_copies=1)


def heat_days(rows):
    heat = np.asarray(rows, float)
    n, T = heat.shape
    return DayMatrix([f"d{i}" for i in range(n)],
                     {"heat": heat, "solar_cf": np.zeros((n, T)), "t_amb": np.full((n, T), 280.0)})


def test_single_day_converges_immediately():
    data = heat_days([[40.0, 70.0, 55.0]])
    design, trace = feasibility_timestep(boiler_model(), data, k=1, config=HeuristicConfig(restarts=2))
    assert trace.converged and len(trace.iterations) == 1
    assert design.capacities["boiler#1"] == pytest.approx(70.0, rel=1e-6)
    assert trace.weights == [365.0]
    assert trace.note == CAVEAT


def test_peak_day_gets_added():
    # one cluster averages the peak away; the heuristic must add day 2
    data = heat_days([[50.0, 50.0], [60.0, 60.0], [200.0, 120.0]])
    design, trace = feasibility_timestep(boiler_model(), data, k=1, config=HeuristicConfig(restarts=2))
    assert trace.converged and len(trace.iterations) == 2
    first = trace.iterations[0]
    assert first.design.capacities["boiler#1"] == pytest.approx(np.mean([50, 60, 200]), rel=1e-6)
    assert first.violations[0][0] == 2 and first.added_day == 2
    assert design.capacities["boiler#1"] == pytest.approx(200.0, rel=1e-6)
    assert max_gap(boiler_model(), design, data) <= 1e-6
    counts = [it.n_scenarios for it in trace.iterations]
    assert all(b > a for a, b in zip(counts, counts[1:]))


def test_added_day_has_zero_weight():
    data = heat_days([[50.0, 50.0], [60.0, 60.0], [200.0, 120.0]])
    model = boiler_model()
    reps = [Scenario.constant({"heat": np.array([103.3, 76.7])}, 2, weight=365.0)]
    _, base = solve_design(model, reps, gap=1e-9)
    _, with_day = solve_design(model, reps + [data.scenario(2, weight=0.0)], gap=1e-9)
    # capex grows by 1 per kW; the representative day also burns more fuel because the boiler input
    # has a term proportional to capacity (curve intercept), while the added day's own fuel is not counted
    econ = model.economics
    (x0, y0), (x1, y1) = DEFAULT_CURVES["boiler"].breakpoints
    intercept = y0 - x0 * (y1 - y0) / (x1 - x0)
    dE = 200.0 - 103.3
    fuel = 365.0 * 2 * intercept * dE / 0.9 * econ.gamma_fuel * econ.delta_t
    assert with_day - base == pytest.approx(dE / econ.gamma_pvf + fuel, rel=1e-9)


def test_audit_oversized_and_removed():
    model = boiler_model()
    data = synthetic_days(5, 6, seed=0)
    big = audit_design(model, Design({"boiler#1": 500.0}), data)
    assert all(p <= 1e-9 for _, p in big)
    none = audit_design(model, Design({"boiler#1": 0.0}), data, with_schedules=True)
    for d, phi, sched, gap in none:
        assert phi == pytest.approx(float(np.max(data.channels["heat"][d])), rel=1e-9)
        assert gap == pytest.approx(phi, abs=1e-7)
    phis = [p for _, p, *_ in none]
    assert phis == sorted(phis, reverse=True)


def test_audit_matches_direct_solve():
    model = boiler_model()
    data = synthetic_days(4, 6, seed=2)
    design = Design({"boiler#1": 150.0})
    for d, phi in audit_design(model, design, data):
        direct = solve_milp(build_operational_milp(model, design, data.scenario(d)).instance).objective
        assert phi == pytest.approx(direct, abs=1e-9)


def test_not_converged_carries_trace():
    data = heat_days([[50.0], [60.0], [200.0], [300.0]])
    with pytest.raises(NotConverged) as err:
        feasibility_timestep(boiler_model(), data, k=1, config=HeuristicConfig(restarts=2, max_iter=1))
    assert len(err.value.result.iterations) == 1


def test_config_validation():
    with pytest.raises(InvalidInput):
        HeuristicConfig(feas_tol=0.0)
    with pytest.raises(InvalidInput):
        HeuristicConfig(max_iter=0)
