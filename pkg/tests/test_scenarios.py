import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robustmes.errors import FormatError, IncompleteDay, InvalidInput
from robustmes.model import Design
from robustmes.scenarios import (
    CSV_COLUMNS, DayMatrix, HullVRep, Scenario, cluster_days, extreme_day, hull_2d, hull_halfspaces_2d, ingest_csv,
    resample, scenario_from_dict, scenario_to_dict, scenario_weights, synthetic_days, synthetic_hourly, write_csv,
)

from conftest import supply_model


def day_matrix(heat, T=None):
    heat = np.atleast_2d(np.asarray(heat, float))
    n, T = heat.shape
    return DayMatrix([f"d{i}" for i in range(n)],
                     {"heat": heat, "solar_cf": np.zeros((n, T)), "t_amb": np.full((n, T), 280.0)})


# ---------------------------------------------------------------- CSV ingest

def _write_rows(path, rows):
    path.write_text(",".join(CSV_COLUMNS) + "\n" + "".join(",".join(map(str, r)) + "\n" for r in rows))


def _day(date, heat=10.0):
    return [[date, h, heat + h, 5.0, 0.0, 0.0, 280.0] for h in range(24)]


def test_ingest_two_days(tmp_path):
    p = tmp_path / "d.csv"
    _write_rows(p, _day("2019-01-01") + _day("2019-01-02", 20.0))
    data = ingest_csv(p, T=12)
    assert data.n_days == 2 and data.n_steps == 12
    # bucket means of consecutive hour pairs: heat + h over h in {2i, 2i+1}
    assert np.allclose(data.channels["heat"][0], 10.0 + 2 * np.arange(12) + 0.5)
    assert np.allclose(data.channels["heat"][1], 20.0 + 2 * np.arange(12) + 0.5)
    assert list(data.channels) == ["cooling", "electricity", "heat", "solar_cf", "t_amb"]


def test_ingest_constant_profile(tmp_path):
    p = tmp_path / "d.csv"
    _write_rows(p, [["x", h, 7.0, 3.0, 1.0, 0.25, 290.0] for h in range(24)])
    data = ingest_csv(p, T=4)
    for ch, v in {"heat": 7.0, "electricity": 3.0, "cooling": 1.0, "solar_cf": 0.25, "t_amb": 290.0}.items():
        assert np.allclose(data.channels[ch], v)


def test_ingest_incomplete_day(tmp_path):
    p = tmp_path / "d.csv"
    _write_rows(p, _day("2019-01-01") + _day("2019-01-02")[:23])
    with pytest.raises(IncompleteDay) as err:
        ingest_csv(p)
    assert "2019-01-02" in str(err.value)


def test_ingest_missing_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("date,hour,heat_kW\nx,0,1\n")
    with pytest.raises(FormatError):
        ingest_csv(p)


def test_ingest_bad_capacity_factor(tmp_path):
    p = tmp_path / "d.csv"
    _write_rows(p, [["x", h, 1.0, 1.0, 1.0, 1.5, 280.0] for h in range(24)])
    with pytest.raises(FormatError):
        ingest_csv(p)


def test_synthetic_roundtrip(tmp_path):
    dates, hourly = synthetic_hourly(5, seed=3)
    p = tmp_path / "s.csv"
    write_csv(p, dates, hourly)
    a, b = ingest_csv(p, T=12), synthetic_days(5, 12, seed=3)
    assert a.dates == b.dates
    for k in a.channels:
        assert np.array_equal(a.channels[k], b.channels[k])


def test_resample_rejects_uneven():
    assert np.allclose(resample(np.arange(24.0), 3), [3.5, 11.5, 19.5])
    with pytest.raises(InvalidInput):
        resample(np.arange(24.0), 5)


# ---------------------------------------------------------------- clustering

def test_weights_sum_exactly():
    for counts in ([1, 1, 1], [7, 3, 11, 9], [30]):
        assert float(np.sum(scenario_weights(counts))) == 365.0


def test_cluster_k_equals_n():
    data = synthetic_days(6, 4, seed=1)
    res = cluster_days(data, k=6, seed=0)
    assert np.allclose(res.weights, 365.0 / 6)
    assert sorted(res.labels.tolist()) == list(range(6))
    assert res.inertia == pytest.approx(0.0, abs=1e-9)


def test_cluster_two_blobs():
    rng = np.random.default_rng(0)
    heat = np.vstack([rng.normal(10, 0.1, (7, 3)), rng.normal(50, 0.1, (3, 3))])
    res = cluster_days(day_matrix(heat), k=2, seed=4)
    assert res.labels.tolist() == [0] * 7 + [1] * 3
    assert res.weights.tolist() == pytest.approx([365 * 0.7, 365 * 0.3])
    assert np.allclose(res.representatives[0].demand("heat"), heat[:7].mean(axis=0))
    assert sum(s.weight for s in res.representatives) == 365.0
    # solar and temperature are constant across days
    assert ("solar_cf", 0) in res.zero_variance_columns and ("t_amb", 2) in res.zero_variance_columns


def test_cluster_deterministic_and_worker_independent():
    data = synthetic_days(20, 6, seed=2)
    a = cluster_days(data, 4, seed=9, restarts=10)
    b = cluster_days(data, 4, seed=9, restarts=10, workers=3)
    assert np.array_equal(a.labels, b.labels) and a.inertia == b.inertia


def test_cluster_inertia_vs_sklearn():
    from sklearn.cluster import KMeans
    data = synthetic_days(30, 12, seed=0)
    X = data.vectors()
    sd = X.std(axis=0)
    Z = (X - X.mean(axis=0)) / np.where(sd == 0, 1.0, sd)
    ref = KMeans(4, n_init=50, random_state=0).fit(Z).inertia_
    ours = cluster_days(data, 4, seed=0).inertia
    assert ours <= ref * (1 + 1e-6)


def test_cluster_history_nonincreasing():
    res = cluster_days(synthetic_days(25, 6, seed=5), 3, seed=1)
    h = np.array(res.history)
    assert np.all(np.diff(h) <= 1e-9 * (1 + h[:-1]))


def test_cluster_k_out_of_range():
    with pytest.raises(InvalidInput):
        cluster_days(synthetic_days(3, 4), k=4)


def test_scenario_dict_roundtrip():
    s = Scenario.constant({"heat": 3.0}, 2, solar_cf=0.1, t_amb=270.0, weight=12.5)
    back = scenario_from_dict(scenario_to_dict(s))
    assert back.weight == 12.5 and np.array_equal(back.demand("heat"), s.demand("heat"))
    assert np.array_equal(back.t_amb, s.t_amb)


# ---------------------------------------------------------------- extreme day

def test_extreme_day_picks_largest_gap():
    heat = np.array([[5.0], [9.0], [12.0], [12.0], [3.0]])
    data = DayMatrix([str(i) for i in range(5)], {"f": heat, "solar_cf": np.zeros((5, 1)),
                                                   "t_amb": np.full((5, 1), 280.0)})
    # capacity 8: gaps 0, 1, 4, 4, 0 -> first of the tied days
    assert extreme_day(data, Design({"src#1": 8.0}), supply_model()) == 2


# ---------------------------------------------------------------- hulls

def test_hull_square_with_center():
    pts = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5), (0.5, 0)]
    assert hull_2d(pts) == [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]


def test_hull_collinear_and_small():
    assert hull_2d([(0, 0), (1, 1), (2, 2)]) == [(0.0, 0.0), (2.0, 2.0)]
    assert hull_2d([(3, 3), (3, 3)]) == [(3.0, 3.0)]


def _brute_force_hull(pts):
    """Points that are extreme along some facet, by the O(n^3) all-pairs supporting-line test."""
    pts = [tuple(p) for p in np.unique(np.asarray(pts, float), axis=0)]
    verts = set()
    for a, b in itertools.combinations(pts, 2):
        side = [(b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) for p in pts]
        if all(s >= -1e-12 for s in side) or all(s <= 1e-12 for s in side):
            # endpoints of a supporting segment, excluding points strictly between them
            on = [p for p, s in zip(pts, side) if abs(s) <= 1e-12]
            t = [np.dot(np.subtract(p, a), np.subtract(b, a)) for p in on]
            verts.add(on[int(np.argmin(t))])
            verts.add(on[int(np.argmax(t))])
    return verts


def test_hull_disk_vs_brute_force():
    rng = np.random.default_rng(1)
    r, a = np.sqrt(rng.random(100)), rng.uniform(0, 2 * np.pi, 100)
    pts = np.column_stack([r * np.cos(a), r * np.sin(a)])
    hull = hull_2d(pts)
    assert set(hull) == _brute_force_hull(pts)
    # counter-clockwise: positive signed area, every point inside every facet
    area = sum(x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in zip(hull, hull[1:] + hull[:1]))
    assert area > 0
    for a_, b_ in hull_halfspaces_2d(hull):
        assert np.all(pts @ a_ <= b_ + 1e-12)


@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=3, max_size=25))
def test_hull_property_vs_brute_force(pts):
    hull = hull_2d(pts)
    if len(hull) >= 3:
        assert set(hull) == _brute_force_hull(pts)


def test_hull_vrep_contains_and_roundtrip():
    h = HullVRep(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [0.0, 0.0]]), (("heat", 0), ("heat", 1)))
    assert h.n_generators == 3  # duplicate dropped
    assert h.contains([0.5, 0.5]) and h.contains([2.0, 0.0]) and not h.contains([1.5, 1.5])
    back = HullVRep.from_dict(h.to_dict())
    assert np.array_equal(back.generators, h.generators) and back.keys == h.keys and back.labels == h.labels
    with pytest.raises(FormatError):
        HullVRep.from_dict({"generators": [[1.0]]})


def test_hull_scenario_substitution():
    h = HullVRep(np.array([[270.0, 10.0], [280.0, 20.0]]), (("t_amb", 1), ("heat", 0)))
    base = Scenario.constant({"heat": 1.0, "electricity": 2.0}, 2, t_amb=300.0)
    s = h.scenario([0.25, 0.75], base)
    assert s.t_amb.tolist() == [300.0, 277.5]
    assert s.demand("heat").tolist() == [17.5, 1.0]
    assert s.demand("electricity").tolist() == [2.0, 2.0]
    assert h.varying_keys() == [("t_amb", 1), ("heat", 0)]


def test_hull_from_days():
    data = synthetic_days(4, 3, seed=0)
    h = HullVRep.from_days(data, days=[0, 2], channels=["heat"])
    assert h.keys == (("heat", 0), ("heat", 1), ("heat", 2))
    assert np.array_equal(h.generators, data.channels["heat"][[0, 2]])
    assert h.labels == (data.dates[0], data.dates[2])
