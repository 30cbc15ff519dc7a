"""Small bundled systems: the two counterexamples, a heat-pump system and the pipeline model.

Each example is a model, a design, an uncertainty hull and (where the hull
leaves channels unset) a base scenario.  The JSON copies under ``data/`` are
written by :func:`export` and loaded by :func:`load`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .model import (
    DEFAULT_CURVES, Converter, ConverterOutput, Design, Economics, HeatPumpLaw, PwlCurve, Storage, SystemModel,
    model_from_dict, model_to_dict,
)
from .scenarios import HullVRep, Scenario, scenario_from_dict, scenario_to_dict

LINEAR = PwlCurve(((0.0, 0.0), (1.0, 1.0)))
NAMES = ("min_part_load", "nonconvex", "heat_pump", "pipeline")


@dataclass(frozen=True)
class Example:
    model: SystemModel
    design: Design | None
    hull: HullVRep | None
    base: Scenario | None = None

    def to_files(self, directory, name: str) -> list:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        written = []

        def put(suffix, doc):
            p = out / f"{name}.{suffix}.json"
            p.write_text(json.dumps(doc, indent=2) + "\n")
            written.append(p)

        put("model", model_to_dict(self.model))
        if self.design is not None:
            put("design", self.design.to_dict())
        if self.hull is not None:
            doc = self.hull.to_dict()
            if self.base is not None:
                doc["base"] = scenario_to_dict(self.base)
            put("hull", doc)
        return written


def min_part_load() -> Example:
    """Two parallel units f1 -> f2 that cannot cover demands between c1's maximum and c2's minimum.

    c1 tops out at 10 kW and c2 starts at 12 kW (20% of 60), so any f2
    demand in (10, 12) forces c2 on at 12 kW, which with curtailment is fine
    unless c3 then runs out of f1: the band d2 in (10, 12), d1 + 12 > 30.
    """
    curve = PwlCurve(((0.2, 0.2), (1.0, 1.0)))
    c1 = Converter("c1", "f1", (ConverterOutput("f2", curve),), capacity_bounds=(0.0, 10.0))
    c2 = Converter("c2", "f1", (ConverterOutput("f2", curve),), capacity_bounds=(60.0, 1e4))
    c3 = Converter("c3", "external", (ConverterOutput("f1", LINEAR),), capacity_bounds=(0.0, 1e4))
    model = SystemModel(("f1", "f2"), (c1, c2, c3), n_copies=1,
                        economics=Economics(gamma_fuel=0.0, delta_t=1.0))
    design = Design({"c1#1": 10.0, "c2#1": 60.0, "c3#1": 30.0})
    hull = HullVRep(np.array([[20.0, 9.0], [5.0, 25.0], [0.0, 0.0]]), (("f1", 0), ("f2", 0)),
                    ("a", "b", "origin"))
    return Example(model, design, hull)


def nonconvex() -> Example:
    """Supply chain external -> f1 -> f2 with a concave (nonconvex) part-load curve on the second unit."""
    curve = PwlCurve(((0.0, 0.0), (0.5, 0.8), (1.0, 1.0)))
    c1 = Converter("c1", "f1", (ConverterOutput("f2", curve),), capacity_bounds=(0.0, 100.0))
    c2 = Converter("c2", "external", (ConverterOutput("f1", LINEAR),), capacity_bounds=(0.0, 100.0))
    model = SystemModel(("f1", "f2"), (c1, c2), n_copies=1, economics=Economics(gamma_fuel=0.0, delta_t=1.0))
    # the design the feasibility time-step heuristic returns for the three vertex days
    design = Design({"c1#1": 10.0, "c2#1": 10.0})
    hull = HullVRep(np.array([[0.0, 10.0], [10.0, 0.0], [0.0, 0.0]]), (("f1", 0), ("f2", 0)),
                    ("a", "b", "origin"))
    return Example(model, design, hull)


def heat_pump() -> Example:
    """Grid-fed heat pump over two steps whose ambient temperatures swap between the generators."""
    hp = Converter("hp", "electricity", (ConverterOutput("heat", DEFAULT_CURVES["heat_pump"]),),
                   eta_nom=HeatPumpLaw(323.15), capacity_bounds=(0.0, 100.0))
    grid = Converter("grid", "external", (ConverterOutput("electricity", LINEAR),), capacity_bounds=(0.0, 100.0))
    model = SystemModel(("heat", "electricity"), (hp, grid), n_copies=1, economics=Economics(delta_t=1.0))
    design = Design({"hp#1": 50.0, "grid#1": 15.0})
    hull = HullVRep(np.array([[270.0, 280.0], [280.0, 270.0]]), (("t_amb", 0), ("t_amb", 1)), ("cold-warm", "warm-cold"))
    base = Scenario.constant({"heat": np.array([40.0, 30.0])}, 2)
    return Example(model, design, hull, base)


def pipeline() -> Example:
    """Boiler, shared-binary CHP and heat storage for the synthetic-data design pipeline (no fixed design)."""
    boiler = Converter("boiler", "external", (ConverterOutput("heat", DEFAULT_CURVES["boiler"]),), eta_nom=0.9,
                       capacity_bounds=(0.0, 400.0))
    chp = Converter("chp", "external", (
        ConverterOutput("electricity", DEFAULT_CURVES["chp_electric"], eta_nom=0.35),
        ConverterOutput("heat", DEFAULT_CURVES["chp_thermal"], eta_nom=0.5, nominal_ratio=1.4),
    ), capacity_bounds=(0.0, 400.0))
    tes = Storage("tes_heat", "heat", 0.95, 0.95, 100.0, 1.0, capacity_bounds=(0.0, 400.0))
    model = SystemModel(("heat", "electricity"), (boiler, chp), (tes,), n_copies=1)
    return Example(model, None, None)


BUILDERS = {"min_part_load": min_part_load, "nonconvex": nonconvex, "heat_pump": heat_pump, "pipeline": pipeline}


def data_dir():
    return resources.files("robustmes") / "data"


def asset(name: str, kind: str):
    """Path-like handle of a bundled file, e.g. ``asset("min_part_load", "model")``."""
    return data_dir() / f"{name}.{kind}.json"


def load_hull_doc(doc: dict) -> tuple:
    base = scenario_from_dict(doc["base"]) if "base" in doc else None
    return HullVRep.from_dict(doc), base


def load(name: str) -> Example:
    """Example read back from the bundled JSON files."""
    if name not in BUILDERS:
        raise KeyError(f"unknown example {name!r}; choose from {', '.join(NAMES)}")
    model = model_from_dict(json.loads(asset(name, "model").read_text()))
    design = hull = base = None
    if asset(name, "design").is_file():
        design = Design.from_dict(json.loads(asset(name, "design").read_text()))
    if asset(name, "hull").is_file():
        hull, base = load_hull_doc(json.loads(asset(name, "hull").read_text()))
    return Example(model, design, hull, base)


def export(directory, names=NAMES) -> list:
    written = []
    for n in names:
        written += BUILDERS[n]().to_files(directory, n)
    return written
