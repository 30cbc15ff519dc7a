"""Command-line entry point.

Settings resolve as flags > ``ROBUSTMES_*`` environment variables > JSON
config file (``--config``) > defaults.  Artifacts go to ``--out``; logs go to
stderr.  Exit codes: 0 success, 2 violated or not converged, 1 bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import examples
from .errors import InvalidInput, NotApplicable, NotConverged, NotRepairable
from .model import Design, curve_is_convex, curve_sse, fit_pwl, load_model
from .scenarios import HullVRep, cluster_days, ingest_csv, synthetic_hourly, write_csv

log = logging.getLogger("robustmes")

EXIT_OK, EXIT_INPUT, EXIT_FLAGGED = 0, 1, 2
ENV_PREFIX = "ROBUSTMES_"


@dataclass
class RunConfig:
    model: str | None = None
    data: str | None = None
    design: str | None = None
    hull: str | None = None
    k: int = 4
    steps: int = 12
    seed: int = 0
    feas_tol: float = 1e-6
    conv_tol: float = 1e-6
    design_gap: float = 0.005
    rel_gap: float = 1e-4
    dual_bound: float = 1e4
    out: str = "."
    backend: str = "builtin"
    threads: int = 0

    def validate(self, needs=()):
        for name in ("feas_tol", "conv_tol", "design_gap", "rel_gap", "dual_bound"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidInput(f"{name} must be a positive number, got {v}")
        if self.k < 1 or self.steps < 1:
            raise InvalidInput("k and steps must be at least 1")
        for name in needs:
            p = getattr(self, name)
            if p is None:
                raise InvalidInput(f"--{name} is required")
            if not Path(p).is_file():
                raise InvalidInput(f"{name} file {p} does not exist")

    @property
    def workers(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    def backend_obj(self):
        from .milp import get_backend

        return get_backend(self.backend)

    def provenance(self) -> dict:
        # the thread count does not change any result, so it stays out of the artifacts
        d = asdict(self)
        d.pop("threads")
        return d


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name, value):
    kind = FIELD_TYPES[name]
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except (TypeError, ValueError):
        raise InvalidInput(f"{name}: cannot read {value!r} as {kind}") from None
    return None if value is None else str(value)


def resolve_config(args: argparse.Namespace, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    values = {}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInput(f"config file {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise InvalidInput(f"config file {args.config}: expected an object")
        for k, v in doc.items():
            if k not in FIELD_TYPES:
                raise InvalidInput(f"config file {args.config}: unknown key {k!r}")
            values[k] = _coerce(k, v)
    for k in FIELD_TYPES:
        env = environ.get(ENV_PREFIX + k.upper())
        if env is not None:
            values[k] = _coerce(k, env)
    for k in FIELD_TYPES:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = _coerce(k, v)
    return RunConfig(**values)


# ---------------------------------------------------------------- artifacts

def _encode(obj, indent=0) -> str:
    """JSON with every float written to 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return format(x, ".17g")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number, str)) or v is None for v in obj):
            return "[" + ", ".join(_encode(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if k != "wall_time"}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def write_artifact(cfg: RunConfig, name: str, payload: dict) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"config": cfg.provenance(), **_strip_timing(payload)}
    path = out / name
    path.write_text(_encode(doc) + "\n")
    log.info("wrote %s", path)
    return path


# ---------------------------------------------------------------- inputs

def _load_data(cfg: RunConfig):
    try:
        return ingest_csv(cfg.data, T=cfg.steps)
    except OSError as exc:
        raise InvalidInput(f"data file {cfg.data}: {exc}") from None


def _design(cfg: RunConfig) -> Design:
    """A design file, or the ``design`` entry of a ``design`` command artifact."""
    try:
        doc = json.loads(Path(cfg.design).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"design file {cfg.design}: invalid JSON: {exc}") from None
    if isinstance(doc, dict) and "capacities" not in doc and isinstance(doc.get("design"), dict):
        doc = doc["design"]
    return Design.from_dict(doc)


def _hull(cfg: RunConfig, model):
    """Hull and base scenario from ``--hull`` JSON, else from the days in ``--data``."""
    if cfg.hull:
        try:
            doc = json.loads(Path(cfg.hull).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"hull file {cfg.hull}: invalid JSON: {exc}") from None
        return examples.load_hull_doc(doc)
    if not cfg.data:
        raise InvalidInput("--hull or --data is required")
    data = _load_data(cfg)
    chans = [f for f in model.form_ids if f in data.channels]
    if model.solar:
        chans.append("solar_cf")
    if model.uses_temperature:
        chans.append("t_amb")
    if not chans:
        raise InvalidInput("the data has no channel the model uses")
    return HullVRep.from_days(data, channels=chans), None


def _verify_config(cfg: RunConfig, base, **extra):
    from .verify import VerifyConfig

    return VerifyConfig(feas_tol=cfg.feas_tol, conv_tol=cfg.conv_tol, rel_gap=cfg.rel_gap,
                        dual_bound=cfg.dual_bound, workers=cfg.workers, backend=cfg.backend_obj(), base=base,
                        **extra)


# ---------------------------------------------------------------- commands

def cmd_fit_pwl(cfg, args):
    try:
        pts = np.loadtxt(args.samples, delimiter=",", ndmin=2, comments="#")
    except ValueError:
        pts = np.loadtxt(args.samples, delimiter=",", ndmin=2, skiprows=1)
    curve = fit_pwl(pts, args.breakpoints)
    write_artifact(cfg, "curve.json", {
        "breakpoints": [list(b) for b in curve.breakpoints], "sse": curve_sse(curve, pts),
        "convex": curve_is_convex(curve), "n_samples": int(pts.shape[0])})
    return EXIT_OK


def cmd_cluster(cfg, args):
    cfg.validate(("data",))
    res = cluster_days(_load_data(cfg), cfg.k, seed=cfg.seed, workers=cfg.workers)
    write_artifact(cfg, "representatives.json", res.to_dict())
    return EXIT_OK


def cmd_design(cfg, args):
    from .robust import HeuristicConfig, feasibility_timestep

    cfg.validate(("model", "data"))
    model, data = load_model(cfg.model), _load_data(cfg)
    hc = HeuristicConfig(k=cfg.k, seed=cfg.seed, feas_tol=cfg.feas_tol, design_gap=cfg.design_gap,
                         max_iter=args.max_iter, workers=cfg.workers, backend=cfg.backend_obj())
    try:
        design, trace = feasibility_timestep(model, data, config=hc)
    except NotConverged as exc:
        write_artifact(cfg, "design.json", {"converged": False, "message": str(exc),
                                            "trace": exc.result.to_dict() if exc.result else None})
        return EXIT_FLAGGED
    write_artifact(cfg, "design.json", {"converged": True, "design": design.to_dict(), "trace": trace.to_dict()})
    return EXIT_OK


def cmd_audit(cfg, args):
    from .robust import CAVEAT, audit_design

    cfg.validate(("model", "design", "data"))
    model, design, data = load_model(cfg.model), _design(cfg), _load_data(cfg)
    rows = audit_design(model, design, data, cfg.backend_obj(), cfg.workers)
    worst = max((p for _, p in rows), default=-math.inf)
    ok = worst <= cfg.feas_tol
    write_artifact(cfg, "audit.json", {
        "feasible": ok, "max_gap": worst, "note": CAVEAT,
        "days": [{"day": data.dates[d], "index": int(d), "phi": p} for d, p in rows]})
    return EXIT_OK if ok else EXIT_FLAGGED


def _report_exit(cfg, name, run):
    try:
        rep = run()
    except NotConverged as exc:
        payload = {"status": "NotConverged", "message": str(exc)}
        if exc.result is not None:
            payload["partial"] = exc.result.to_dict()
        write_artifact(cfg, name, payload)
        return EXIT_FLAGGED
    write_artifact(cfg, name, rep.to_dict())
    log.info("%s: %s, phi=%.6g after %d iterations (%.1f s)", rep.method, rep.status, rep.phi, rep.iterations,
             rep.wall_time)
    return EXIT_OK if rep.status == "Robust" else EXIT_FLAGGED


def cmd_worst_case(cfg, args):
    from .verify import blankenship_worst_case

    cfg.validate(("model", "design"))
    model, design = load_model(cfg.model), _design(cfg)
    hull, base = _hull(cfg, model)
    vc = _verify_config(cfg, base, max_iter=args.max_iter)
    return _report_exit(cfg, "worst_case.json", lambda: blankenship_worst_case(model, design, hull, vc))


def cmd_verify(cfg, args):
    from .verify import hybrid_verify

    cfg.validate(("model", "design"))
    model, design = load_model(cfg.model), _design(cfg)
    hull, base = _hull(cfg, model)
    vc = _verify_config(cfg, base, max_iter=args.max_iter, embed_primal=not args.no_primal)
    return _report_exit(cfg, "verify_report.json", lambda: hybrid_verify(model, design, hull, vc))


def _parse_key(text):
    ch, _, t = text.rpartition(":")
    if not ch:
        raise InvalidInput(f"key {text!r} should look like channel:step")
    try:
        return ch, int(t)
    except ValueError:
        raise InvalidInput(f"key {text!r} should look like channel:step") from None


def cmd_sample_region(cfg, args):
    from .verify import sample_region

    cfg.validate(("model", "design"))
    model, design = load_model(cfg.model), _design(cfg)
    base = None
    keys = [_parse_key(k) for k in args.keys] if args.keys else None
    box = None
    if cfg.hull:
        hull, base = _hull(cfg, model)
        keys = keys or list(hull.keys)
        if args.box is None:
            idx = [hull.keys.index(k) for k in keys]
            Y = hull.generators[:, idx]
            box = tuple((float(lo), float(hi)) for lo, hi in zip(Y.min(axis=0), Y.max(axis=0)))
    if keys is None or len(keys) != 2:
        raise InvalidInput("sample-region needs exactly two keys (--keys, or a 2-D --hull)")
    if args.box is not None:
        box = ((args.box[0], args.box[1]), (args.box[2], args.box[3]))
    if box is None:
        raise InvalidInput("--box is required without --hull")
    grid = sample_region(model, design, keys, box, args.n, base=base, feas_tol=cfg.feas_tol,
                         backend=cfg.backend_obj())
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    grid.to_csv(out / "region.csv")
    n_bad = int((~grid.feasible).sum())
    write_artifact(cfg, "region.json", {"keys": [list(k) for k in keys], "box": [list(b) for b in box],
                                        "n": args.n, "infeasible_cells": n_bad, "csv": "region.csv"})
    return EXIT_OK


def cmd_repair(cfg, args):
    from .schedule import StorageSchedule, repair_complementarity, verify_schedule

    try:
        doc = json.loads(Path(args.schedule).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"schedule file {args.schedule}: {exc}") from None
    known = {f.name for f in fields(StorageSchedule)}
    bad = sorted(set(doc) - known)
    if bad:
        raise InvalidInput(f"schedule: unknown keys {bad}")
    s = StorageSchedule(**{k: (math.inf if v is None and k in ("tau", "in_max", "out_max", "level_max") else v)
                           for k, v in doc.items()})
    before = verify_schedule(s)
    if before:
        raise InvalidInput(f"schedule is not feasible before repair: {before[0]}")
    r = repair_complementarity(s)
    write_artifact(cfg, "repaired.json", {
        "level": r.level, "inflow": r.inflow, "outflow": r.outflow,
        "violations": [str(v) for v in verify_schedule(r, require_complementarity=True)]})
    return EXIT_OK


def cmd_synth_data(cfg, args):
    dates, hourly = synthetic_hourly(args.days, cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / args.name, dates, hourly)
    log.info("wrote %s", out / args.name)
    return EXIT_OK


def cmd_examples(cfg, args):
    unknown = sorted(set(args.names) - set(examples.NAMES))
    if unknown:
        raise InvalidInput(f"unknown examples {unknown}; choose from {', '.join(examples.NAMES)}")
    for p in examples.export(cfg.out, args.names or examples.NAMES):
        log.info("wrote %s", p)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", help="JSON file with run settings (lowest precedence)")
    g.add_argument("--model")
    g.add_argument("--data", help="hourly CSV (date,hour,heat_kW,elec_kW,cool_kW,solar_cf,t_amb_K)")
    g.add_argument("--design")
    g.add_argument("--hull", help="hull JSON (keys, generators, optional base scenario)")
    g.add_argument("--k", type=int)
    g.add_argument("--steps", type=int, help="timesteps per day after resampling")
    g.add_argument("--seed", type=int)
    g.add_argument("--feas-tol", dest="feas_tol", type=float)
    g.add_argument("--conv-tol", dest="conv_tol", type=float)
    g.add_argument("--design-gap", dest="design_gap", type=float)
    g.add_argument("--rel-gap", dest="rel_gap", type=float)
    g.add_argument("--dual-bound", dest="dual_bound", type=float)
    g.add_argument("--out", help="output directory")
    g.add_argument("--backend", help="builtin or highs")
    g.add_argument("--threads", type=int, help="worker threads (default: logical cores)")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="robustmes", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-pwl", parents=[common], help="fit a piecewise-linear part-load curve")
    p.add_argument("--samples", required=True, help="CSV of (lambda_out, lambda_in) pairs")
    p.add_argument("--breakpoints", type=int, default=3)
    p.set_defaults(func=cmd_fit_pwl)

    p = sub.add_parser("cluster", parents=[common], help="representative days by k-means")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("design", parents=[common], help="feasibility time-step design heuristic")
    p.add_argument("--max-iter", type=int, default=25)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("audit", parents=[common], help="operational gap of a design on every historical day")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("worst-case", parents=[common], help="adaptive discretization over the hull")
    p.add_argument("--max-iter", type=int, default=200)
    p.set_defaults(func=cmd_worst_case)

    p = sub.add_parser("verify", parents=[common], help="hybrid worst-case verification over the hull")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--no-primal", action="store_true", help="leave the primal rows out of the bilinear program")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sample-region", parents=[common], help="classify a 2-D demand grid")
    p.add_argument("--keys", nargs=2, metavar="CHANNEL:STEP")
    p.add_argument("--box", nargs=4, type=float, metavar=("D1LO", "D1HI", "D2LO", "D2HI"))
    p.add_argument("--n", type=int, default=100)
    p.set_defaults(func=cmd_sample_region)

    p = sub.add_parser("repair", parents=[common], help="remove simultaneous charge/discharge from a schedule")
    p.add_argument("--schedule", required=True, help="storage schedule JSON")
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("synth-data", parents=[common], help="write a seeded synthetic hourly CSV")
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--name", default="synthetic.csv")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("examples", parents=[common], help="copy the bundled example files")
    p.add_argument("names", nargs="*", help=f"any of {', '.join(examples.NAMES)} (default: all)")
    p.set_defaults(func=cmd_examples)
    return parser


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args, environ)
        cfg.validate()
        return args.func(cfg, args)
    except (InvalidInput, NotApplicable, NotRepairable, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
