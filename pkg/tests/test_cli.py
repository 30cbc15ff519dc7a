import json

import numpy as np
import pytest

from robustmes import examples
from robustmes.cli import RunConfig, build_parser, main, resolve_config


@pytest.fixture
def ex_dir(tmp_path):
    assert main(["examples", "--out", str(tmp_path)]) == 0
    return tmp_path


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["synth-data", "--days", "6", "--seed", "1", "--out", str(d)]) == 0
    return d / "synthetic.csv"


def read(path):
    return json.loads(path.read_text())


def test_examples_export(ex_dir):
    names = sorted(p.name for p in ex_dir.iterdir())
    assert "min_part_load.model.json" in names and "heat_pump.hull.json" in names
    assert "pipeline.design.json" not in names
    # bundled copies equal the freshly exported ones
    for n in names:
        name, kind, _ = n.split(".")
        assert read(ex_dir / n) == json.loads(examples.asset(name, kind).read_text())


def test_examples_unknown_name(tmp_path, capsys):
    assert main(["examples", "nope", "--out", str(tmp_path)]) == 1
    assert "nope" in capsys.readouterr().err


def test_cluster_weights(synth, tmp_path):
    assert main(["cluster", "--data", str(synth), "--k", "3", "--steps", "6", "--out", str(tmp_path)]) == 0
    doc = read(tmp_path / "representatives.json")
    assert sum(doc["weights"]) == 365.0 and len(doc["representatives"]) == 3
    assert doc["config"]["k"] == 3 and "threads" not in doc["config"]


def test_verify_oversized_robust(ex_dir, tmp_path):
    design = tmp_path / "big.json"
    design.write_text(json.dumps({"capacities": {"c1#1": 10.0, "c2#1": 60.0, "c3#1": 1000.0}}))
    out = tmp_path / "o"
    code = main(["verify", "--model", str(ex_dir / "min_part_load.model.json"), "--design", str(design),
                 "--hull", str(ex_dir / "min_part_load.hull.json"), "--out", str(out)])
    assert code == 0
    rep = read(out / "verify_report.json")
    assert rep["status"] == "Robust" and rep["iterations"] == 1


def test_verify_violated_exit_code(ex_dir, tmp_path):
    args = ["--model", str(ex_dir / "min_part_load.model.json"), "--design", str(ex_dir / "min_part_load.design.json"),
            "--hull", str(ex_dir / "min_part_load.hull.json"), "--out", str(tmp_path)]
    assert main(["verify"] + args) == 2
    assert main(["worst-case"] + args) == 2
    a, b = read(tmp_path / "verify_report.json"), read(tmp_path / "worst_case.json")
    assert a["status"] == b["status"] == "Violated"
    assert a["phi"] == pytest.approx(b["phi"], abs=1e-5)
    assert "wall_time" not in a


def test_heat_pump_worst_case_not_applicable(ex_dir, tmp_path, capsys):
    code = main(["worst-case", "--model", str(ex_dir / "heat_pump.model.json"),
                 "--design", str(ex_dir / "heat_pump.design.json"), "--hull", str(ex_dir / "heat_pump.hull.json"),
                 "--out", str(tmp_path)])
    assert code == 1 and "hybrid" in capsys.readouterr().err


def test_bad_model_reports_path(ex_dir, tmp_path, capsys):
    doc = read(ex_dir / "min_part_load.model.json")
    doc["converters"][1]["outputs"][0]["curve"][0][1] = "abc"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code = main(["verify", "--model", str(bad), "--design", str(ex_dir / "min_part_load.design.json"),
                 "--hull", str(ex_dir / "min_part_load.hull.json"), "--out", str(tmp_path)])
    assert code == 1
    assert "converters[1]" in capsys.readouterr().err


def test_missing_input_file(tmp_path, capsys):
    assert main(["audit", "--model", str(tmp_path / "none.json"), "--design", "x", "--data", "y"]) == 1
    assert "does not exist" in capsys.readouterr().err


def test_precedence_flags_env_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"k": 2, "seed": 5, "feas_tol": 1e-5, "backend": "highs"}))
    parser = build_parser()
    args = parser.parse_args(["cluster", "--config", str(cfg), "--k", "7"])
    rc = resolve_config(args, {"ROBUSTMES_K": "3", "ROBUSTMES_SEED": "9"})
    assert (rc.k, rc.seed, rc.feas_tol, rc.backend) == (7, 9, 1e-5, "highs")
    assert rc.steps == RunConfig().steps
    with pytest.raises(ValueError):
        resolve_config(parser.parse_args(["cluster"]), {"ROBUSTMES_K": "many"})


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kk": 2}))
    assert main(["examples", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "kk" in capsys.readouterr().err


def test_reruns_byte_identical(synth, tmp_path):
    outs = []
    out = tmp_path / "run"
    for threads in ("1", "2"):
        assert main(["cluster", "--data", str(synth), "--k", "2", "--steps", "4", "--threads", threads,
                     "--out", str(out)]) == 0
        outs.append((out / "representatives.json").read_bytes())
    assert outs[0] == outs[1]


def test_design_and_audit(synth, tmp_path):
    model = tmp_path / "pipeline.model.json"
    examples.pipeline().to_files(tmp_path, "pipeline")
    out = tmp_path / "run"
    assert main(["design", "--model", str(model), "--data", str(synth), "--k", "2", "--steps", "4",
                 "--out", str(out)]) == 0
    doc = read(out / "design.json")
    assert doc["converged"] and doc["trace"]["note"].startswith("all historical days")
    # the design artifact can be fed straight back to audit
    assert main(["audit", "--model", str(model), "--design", str(out / "design.json"), "--data", str(synth),
                 "--steps", "4", "--out", str(out)]) == 0
    audit = read(out / "audit.json")
    assert audit["feasible"] and len(audit["days"]) == 6


def test_sample_region(ex_dir, tmp_path):
    code = main(["sample-region", "--model", str(ex_dir / "min_part_load.model.json"),
                 "--design", str(ex_dir / "min_part_load.design.json"), "--keys", "f1:0", "f2:0",
                 "--box", "0", "20", "0", "12", "--n", "10", "--out", str(tmp_path)])
    assert code == 0
    rows = np.genfromtxt(tmp_path / "region.csv", delimiter=",", names=True)
    assert rows.size == 100
    side = read(tmp_path / "region.json")
    assert side["infeasible_cells"] == int((rows["feasible"] == 0).sum()) > 0
    # infeasible cells sit in the band where f2 lies between c1's maximum and c2's minimum output
    bad = rows[rows["feasible"] == 0]
    assert np.all((bad["d2"] > 10.0) & (bad["d2"] < 12.0))


def test_repair(tmp_path):
    sched = tmp_path / "s.json"
    sched.write_text(json.dumps({"level": [10.0 + 4.5 - 1.25], "inflow": [5.0], "outflow": [1.0], "eta_in": 0.9,
                                 "eta_out": 0.8, "initial_level": 10.0}))
    assert main(["repair", "--schedule", str(sched), "--out", str(tmp_path)]) == 0
    doc = read(tmp_path / "repaired.json")
    assert doc["outflow"] == [0.0] and doc["inflow"][0] == pytest.approx(3.6111, abs=5e-5)
    assert doc["violations"] == []
    sched.write_text(json.dumps({"level": [1.0], "inflow": [1.0], "outflow": [1.0], "eta_in": 1.2,
                                 "initial_level": 0.8}))
    assert main(["repair", "--schedule", str(sched), "--out", str(tmp_path)]) == 1


def test_fit_pwl(tmp_path):
    x = np.linspace(0.2, 1.0, 60)
    samples = tmp_path / "s.csv"
    np.savetxt(samples, np.column_stack([x, x**2]), delimiter=",", header="lambda_out,lambda_in")
    assert main(["fit-pwl", "--samples", str(samples), "--breakpoints", "3", "--out", str(tmp_path)]) == 0
    doc = read(tmp_path / "curve.json")
    assert len(doc["breakpoints"]) == 3 and doc["convex"]
