import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robustmes.errors import InsufficientData, InvalidInput, ModelSchemaError, SingularEfficiency
from robustmes.model import (
    DEFAULT_CURVES, Converter, ConverterOutput, Economics, HeatPumpLaw, PwlCurve, Storage, SystemModel,
    curve_is_convex, curve_sse, fit_pwl, hp_efficiency, model_from_dict, model_to_dict,
)
from robustmes import examples


# ---------------------------------------------------------------- fit_pwl

def test_fit_line_exact():
    x = np.linspace(0.2, 1.0, 50)
    curve = fit_pwl(np.column_stack([x, 2 * x]), 2)
    assert np.allclose(curve.breakpoints, [(0.2, 0.4), (1.0, 2.0)], atol=1e-12)
    assert curve_sse(curve, np.column_stack([x, 2 * x])) < 1e-20


def test_fit_square_three_beats_two():
    x = np.linspace(0.2, 1.0, 250)
    pts = np.column_stack([x, x**2])
    sse2 = curve_sse(fit_pwl(pts, 2), pts)
    sse3 = curve_sse(fit_pwl(pts, 3), pts)
    assert sse3 < sse2


def test_fit_square_matches_brute_force_knot():
    # one interior knot: scan its position on a fine grid with least-squares values
    x = np.linspace(0.2, 1.0, 250)
    pts = np.column_stack([x, x**2])
    best = math.inf
    for k in np.linspace(0.21, 0.99, 781):
        B = np.column_stack([np.ones_like(x), x, np.maximum(x - k, 0.0)])
        coef, *_ = np.linalg.lstsq(B, x**2, rcond=None)
        best = min(best, float(np.sum((B @ coef - x**2) ** 2)))
    assert curve_sse(fit_pwl(pts, 3), pts) <= best * (1 + 1e-6)


def test_fit_errors():
    x = np.linspace(0, 1, 5)
    with pytest.raises(InsufficientData):
        fit_pwl(np.column_stack([x, x]), 3)
    with pytest.raises(InvalidInput):
        fit_pwl(np.column_stack([x[::-1], x]), 2)


@given(st.integers(0, 10_000), st.integers(2, 5))
def test_fit_endpoints_pinned_and_sse_monotone(seed, n):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0.1, 1.0, 60))
    y = np.sin(4 * x) + 0.1 * rng.standard_normal(60)
    pts = np.column_stack([x, y])
    c = fit_pwl(pts, n)
    assert c.lambda_out[0] == x[0] and c.lambda_out[-1] == x[-1]
    assert curve_sse(fit_pwl(pts, n + 1), pts) <= curve_sse(c, pts) * (1 + 1e-9) + 1e-12


# ---------------------------------------------------------------- curves

def test_default_curves_table():
    assert DEFAULT_CURVES["boiler"].breakpoints == ((0.2, 0.221), (1.0, 0.996))
    assert DEFAULT_CURVES["absorption_chiller"].breakpoints == ((0.2, 0.245), (0.6, 0.478), (1.0, 0.978))
    assert DEFAULT_CURVES["compression_chiller"].breakpoints == ((0.2, 0.309), (0.689, 0.580), (1.0, 0.97))
    assert DEFAULT_CURVES["chp_thermal"].breakpoints == ((0.5, 0.585), (1.0, 1.0))
    assert DEFAULT_CURVES["chp_electric"].breakpoints == ((0.5, 0.461), (1.0, 0.992))
    assert DEFAULT_CURVES["heat_pump"].breakpoints == ((0.2, 0.2), (1.0, 1.0))
    for c in DEFAULT_CURVES.values():
        c.check_part_load()


def test_convexity_examples():
    assert curve_is_convex(DEFAULT_CURVES["boiler"])
    ac = DEFAULT_CURVES["absorption_chiller"]
    assert np.allclose(ac.slopes, (0.5825, 1.25))
    assert curve_is_convex(ac)
    bad = PwlCurve(((0.2, 0.1), (0.6, 0.9), (1.0, 1.0)))
    assert np.allclose(bad.slopes, (2.0, 0.25))
    assert not curve_is_convex(bad)


def _convex_by_chords(curve):
    xs = np.linspace(curve.lambda_out[0], curve.lambda_out[-1], 41)
    ys = curve(xs)
    for i in range(len(xs)):
        for j in range(i + 2, len(xs)):
            mid = (xs[i] + xs[j]) / 2
            if curve(mid) > (ys[i] + ys[j]) / 2 + 1e-12:
                return False
    return True


@st.composite
def curves(draw):
    n = draw(st.integers(2, 5))
    xs = sorted(draw(st.lists(st.floats(0.0, 0.95), min_size=n - 1, max_size=n - 1, unique=True)))
    xs = xs + [1.0]
    if any(b - a < 1e-3 for a, b in zip(xs, xs[1:])):
        xs = list(np.linspace(0.1, 1.0, n))
    ys = draw(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n))
    return PwlCurve(tuple(zip(xs, ys)))


@given(curves())
def test_convexity_matches_chord_oracle(curve):
    assert curve_is_convex(curve) == _convex_by_chords(curve)


def test_curve_validation():
    with pytest.raises(InvalidInput):
        PwlCurve(((0.5, 0.5), (0.5, 1.0)))
    with pytest.raises(InvalidInput):
        PwlCurve(((0.2, 0.2), (0.9, 1.0))).check_part_load()


# ---------------------------------------------------------------- heat pump law

def test_hp_efficiency_values():
    assert hp_efficiency(333.15, 283.15) == pytest.approx(0.36 * 333.15 / 50.0, rel=1e-12)
    assert hp_efficiency(333.15, 283.15) == pytest.approx(2.39868, abs=5e-6)
    assert hp_efficiency(350.0, 350.0 * (1 - 0.36)) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(SingularEfficiency):
        hp_efficiency(320.0, 320.0)


@given(st.floats(300.0, 400.0), st.lists(st.floats(200.0, 290.0), min_size=3, max_size=3, unique=True))
def test_hp_inverse_is_affine(t_hp, temps):
    t = np.array(temps)
    inv = 1.0 / hp_efficiency(t_hp, t)
    # three-point collinearity of (t, 1/eta)
    det = (t[1] - t[0]) * (inv[2] - inv[0]) - (t[2] - t[0]) * (inv[1] - inv[0])
    assert abs(det) <= 1e-12 * max(1.0, np.ptp(t) ** 2)
    a, b = HeatPumpLaw(t_hp).inverse_affine()
    assert np.allclose(inv, a + b * t, rtol=1e-12)


# ---------------------------------------------------------------- model validation and JSON

def test_model_invariants():
    out = (ConverterOutput("heat", DEFAULT_CURVES["boiler"]),)
    with pytest.raises(InvalidInput):
        SystemModel(("heat", "heat"))
    with pytest.raises(InvalidInput):
        SystemModel(("heat",), (Converter("b", "gas", out),))
    with pytest.raises(InvalidInput):
        SystemModel(("heat",), n_copies=0)
    with pytest.raises(InvalidInput):
        Economics(delta_t=0.0)
    with pytest.raises(InvalidInput):
        Storage("s", "heat", 1.0, 1.0, 0.0, 1.0)
    with pytest.raises(InvalidInput):
        Converter("b", "external", out, capacity_bounds=(10.0, 5.0))


def test_gamma_pvf():
    assert Economics().gamma_pvf == pytest.approx((1.08**4 - 1) / (0.08 * 1.08**4), rel=1e-15)
    assert Economics().gamma_pvf == pytest.approx(3.31213, abs=5e-6)


@pytest.mark.parametrize("name", examples.NAMES)
def test_model_json_roundtrip(name):
    model = examples.BUILDERS[name]().model
    doc = model_to_dict(model)
    back = model_from_dict(json.loads(json.dumps(doc)))
    assert back == model
    # curve values survive as decimal strings
    assert model_to_dict(back) == doc


def test_schema_error_names_path():
    doc = model_to_dict(examples.min_part_load().model)
    doc["converters"][1]["outputs"][0]["curve"][0][1] = "abc"
    with pytest.raises(ModelSchemaError) as err:
        model_from_dict(doc)
    assert "converters[1]" in str(err.value)
