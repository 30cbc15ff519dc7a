"""Component catalog of a multi-energy system and piecewise-linear curve fitting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .errors import InsufficientData, InvalidInput, ModelSchemaError, SingularEfficiency

EXTERNAL = "external"
HP_CARNOT_FACTOR = 0.36


@dataclass(frozen=True)
class EnergyForm:
    id: str


@dataclass(frozen=True)
class PwlCurve:
    """Piecewise-linear relative input over relative output.

    ``breakpoints`` holds ``(lambda_out, lambda_in)`` pairs with strictly
    increasing ``lambda_out``.  Curves attached to converters must also pass
    :meth:`check_part_load` (last ``lambda_out`` equal to 1, values in [0, 1.2]).
    """

    breakpoints: tuple

    def __post_init__(self):
        pts = tuple((float(a), float(b)) for a, b in self.breakpoints)
        if len(pts) < 2:
            raise InvalidInput("a curve needs at least two breakpoints")
        xs = [p[0] for p in pts]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise InvalidInput("lambda_out must be strictly increasing")
        if not all(math.isfinite(v) for p in pts for v in p):
            raise InvalidInput("curve values must be finite")
        object.__setattr__(self, "breakpoints", pts)

    def check_part_load(self):
        if self.lambda_out[-1] != 1.0:
            raise InvalidInput("last lambda_out must equal 1")
        if any(v < 0 or v > 1.2 for p in self.breakpoints for v in p):
            raise InvalidInput("curve values must lie in [0, 1.2]")
        return self

    @property
    def lambda_out(self) -> tuple:
        return tuple(p[0] for p in self.breakpoints)

    @property
    def lambda_in(self) -> tuple:
        return tuple(p[1] for p in self.breakpoints)

    @property
    def min_part_load(self) -> float:
        return self.breakpoints[0][0]

    @property
    def n_segments(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def slopes(self) -> tuple:
        (x, y) = np.array(self.breakpoints).T
        return tuple(np.diff(y) / np.diff(x))

    def __call__(self, lam_out):
        """Relative input at relative output ``lam_out`` (linear extrapolation outside)."""
        xs, ys = np.array(self.lambda_out), np.array(self.lambda_in)
        lam = np.asarray(lam_out, dtype=float)
        seg = np.clip(np.searchsorted(xs, lam, side="right") - 1, 0, len(xs) - 2)
        slope = (ys[seg + 1] - ys[seg]) / (xs[seg + 1] - xs[seg])
        return ys[seg] + slope * (lam - xs[seg])


def curve_is_convex(curve: PwlCurve) -> bool:
    """True iff the segment slopes are non-decreasing."""
    s = curve.slopes
    return all(b >= a - 1e-12 * max(1.0, abs(a)) for a, b in zip(s, s[1:]))


@dataclass(frozen=True)
class HeatPumpLaw:
    """Nominal efficiency ``0.36 * t_hp / (t_hp - t_amb)`` with output temperature ``t_hp`` in K."""

    t_hp: float

    def __call__(self, t_amb):
        return hp_efficiency(self.t_hp, t_amb)

    def inverse_affine(self) -> tuple:
        """(a, b) such that ``1/eta(t_amb) = a + b * t_amb``."""
        k = HP_CARNOT_FACTOR * self.t_hp
        return 1.0 / HP_CARNOT_FACTOR, -1.0 / k


def hp_efficiency(t_hp: float, t_amb):
    t_amb_arr = np.asarray(t_amb, dtype=float)
    if np.any(t_amb_arr >= t_hp):
        raise SingularEfficiency(f"ambient temperature must stay below t_hp={t_hp} K")
    eta = HP_CARNOT_FACTOR * t_hp / (t_hp - t_amb_arr)
    return float(eta) if eta.ndim == 0 else eta


Efficiency = Union[float, HeatPumpLaw]


@dataclass(frozen=True)
class ConverterOutput:
    form: str
    curve: PwlCurve
    eta_nom: Efficiency | None = None
    nominal_ratio: float = 1.0


@dataclass(frozen=True)
class Converter:
    name: str
    input: str
    outputs: tuple
    eta_nom: Efficiency = 1.0
    capacity_bounds: tuple = (0.0, 1e4)
    capex_segments: tuple | None = None
    maintenance_factor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if not 1 <= len(self.outputs) <= 2:
            raise InvalidInput(f"converter {self.name}: one or two outputs required")
        if len({o.curve.n_segments for o in self.outputs}) != 1:
            raise InvalidInput(f"converter {self.name}: outputs share part-load binaries and need equal segment counts")
        _check_bounds(self.name, self.capacity_bounds)
        _check_capex(self.name, self.capex_segments)

    def output_eta(self, k: int) -> Efficiency:
        eta = self.outputs[k].eta_nom
        return self.eta_nom if eta is None else eta

    @property
    def depends_on_temperature(self) -> bool:
        return any(isinstance(self.output_eta(k), HeatPumpLaw) for k in range(len(self.outputs)))


@dataclass(frozen=True)
class FixedFraction:
    fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise InvalidInput("initial fraction must lie in [0, 1]")


@dataclass(frozen=True)
class DesignVariable:
    pass


@dataclass(frozen=True)
class Storage:
    name: str
    form: str
    eta_in: float = 1.0
    eta_out: float = 1.0
    tau: float = 1e6
    gamma_sto: float = 1.0
    init_policy: FixedFraction | DesignVariable = FixedFraction(0.5)
    capacity_bounds: tuple = (0.0, 1e4)
    capex_segments: tuple | None = None
    maintenance_factor: float = 0.0

    def __post_init__(self):
        if not (0 < self.eta_in <= 1 and 0 < self.eta_out <= 1):
            raise InvalidInput(f"storage {self.name}: efficiencies must lie in (0, 1]")
        if self.tau <= 0 or self.gamma_sto <= 0:
            raise InvalidInput(f"storage {self.name}: tau and gamma_sto must be positive")
        _check_bounds(self.name, self.capacity_bounds)
        _check_capex(self.name, self.capex_segments)


@dataclass(frozen=True)
class SolarSource:
    name: str
    form: str
    capacity_bounds: tuple = (0.0, 1e4)
    capex_segments: tuple | None = None
    maintenance_factor: float = 0.0

    def __post_init__(self):
        _check_bounds(self.name, self.capacity_bounds)
        _check_capex(self.name, self.capex_segments)


def _check_bounds(name, bounds):
    lo, hi = bounds
    if not (0 <= lo <= hi) or not math.isfinite(hi):
        raise InvalidInput(f"{name}: capacity bounds must satisfy 0 <= E_min <= E_max < inf")


def _check_capex(name, segs):
    if segs is None:
        return
    if len(segs) < 2:
        raise InvalidInput(f"{name}: capex needs at least two breakpoints")
    es = [e for e, _ in segs]
    if any(b <= a for a, b in zip(es, es[1:])):
        raise InvalidInput(f"{name}: capex breakpoint capacities must be strictly increasing")


def capex_breakpoints(component) -> tuple:
    """Capex breakpoints, defaulting to a linear 1 currency/kW placeholder over the capacity range."""
    if component.capex_segments is not None:
        return tuple((float(e), float(c)) for e, c in component.capex_segments)
    hi = float(component.capacity_bounds[1])
    return ((0.0, 0.0), (hi, hi))


@dataclass(frozen=True)
class Economics:
    interest_rate: float = 0.08
    horizon_years: float = 4.0
    gamma_fuel: float = 0.08
    delta_t: float = 2.0

    def __post_init__(self):
        if self.delta_t <= 0:
            raise InvalidInput("delta_t must be positive")

    @property
    def gamma_pvf(self) -> float:
        i, n = self.interest_rate, self.horizon_years
        if i == 0:
            return float(n)
        return ((1 + i) ** n - 1) / (i * (1 + i) ** n)


@dataclass(frozen=True)
class SystemModel:
    forms: tuple
    converters: tuple = ()
    storages: tuple = ()
    solar: tuple = ()
    n_copies: int = 2
    economics: Economics = field(default_factory=Economics)

    def __post_init__(self):
        forms = tuple(f if isinstance(f, EnergyForm) else EnergyForm(str(f)) for f in self.forms)
        object.__setattr__(self, "forms", forms)
        for name in ("converters", "storages", "solar"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        ids = [f.id for f in forms]
        if len(set(ids)) != len(ids):
            raise InvalidInput("energy form ids must be unique")
        if self.n_copies < 1:
            raise InvalidInput("n_copies must be at least 1")
        known = set(ids)
        names = []
        for c in self.converters:
            if c.input != EXTERNAL and c.input not in known:
                raise InvalidInput(f"converter {c.name}: unknown input form {c.input!r}")
            for o in c.outputs:
                if o.form not in known:
                    raise InvalidInput(f"converter {c.name}: unknown output form {o.form!r}")
            names.append(c.name)
        for s in self.storages:
            if s.form not in known:
                raise InvalidInput(f"storage {s.name}: unknown form {s.form!r}")
            names.append(s.name)
        for p in self.solar:
            if p.form not in known:
                raise InvalidInput(f"solar source {p.name}: unknown form {p.form!r}")
            names.append(p.name)
        if len(set(names)) != len(names):
            raise InvalidInput("component names must be unique")

    @property
    def form_ids(self) -> tuple:
        return tuple(f.id for f in self.forms)

    def copies(self, component) -> list:
        """Instance names of a component: ``name#1`` ... ``name#n_copies``."""
        return [f"{component.name}#{i}" for i in range(1, self.n_copies + 1)]

    def instances(self):
        """Yield ``(instance_name, component)`` over all converter, storage and solar copies."""
        for comp in (*self.converters, *self.storages, *self.solar):
            for inst in self.copies(comp):
                yield inst, comp

    @property
    def uses_temperature(self) -> bool:
        return any(c.depends_on_temperature for c in self.converters)


@dataclass(frozen=True)
class Design:
    """Installed capacities per component instance (kW) and optional initial storage levels (kWh).

    Instances absent from ``capacities`` or with zero capacity are not installed.
    """

    capacities: dict
    initial_levels: dict = field(default_factory=dict)

    def capacity(self, instance: str) -> float:
        return float(self.capacities.get(instance, 0.0))

    def installed(self, instance: str) -> bool:
        return self.capacity(instance) > 0.0

    def to_dict(self) -> dict:
        return {"capacities": dict(self.capacities), "initial_levels": dict(self.initial_levels)}

    @staticmethod
    def from_dict(d: dict) -> "Design":
        if not isinstance(d, dict) or "capacities" not in d:
            raise ModelSchemaError("design", "expected an object with 'capacities'")
        caps = {}
        for k, v in d["capacities"].items():
            try:
                caps[str(k)] = float(v)
            except (TypeError, ValueError):
                raise ModelSchemaError(f"design.capacities.{k}", "not a number") from None
            if caps[str(k)] < 0:
                raise ModelSchemaError(f"design.capacities.{k}", "negative capacity")
        levels = {str(k): float(v) for k, v in d.get("initial_levels", {}).items()}
        return Design(caps, levels)

    def scaled(self, factor: float) -> "Design":
        return Design({k: v * factor for k, v in self.capacities.items()},
                      {k: v * factor for k, v in self.initial_levels.items()})


# Part-load curves (lambda_out, lambda_in) of the conversion technologies.
DEFAULT_CURVES = {
    "boiler": PwlCurve(((0.2, 0.221), (1.0, 0.996))),
    "chp_thermal": PwlCurve(((0.5, 0.585), (1.0, 1.0))),
    "chp_electric": PwlCurve(((0.5, 0.461), (1.0, 0.992))),
    "absorption_chiller": PwlCurve(((0.2, 0.245), (0.6, 0.478), (1.0, 0.978))),
    "compression_chiller": PwlCurve(((0.2, 0.309), (0.689, 0.580), (1.0, 0.97))),
    "heat_pump": PwlCurve(((0.2, 0.2), (1.0, 1.0))),
}

BATTERY_GAMMA_STO = 4.0
THERMAL_GAMMA_STO = 1.0


# ---------------------------------------------------------------- fitting


def _design_matrix(x, knots):
    """Hat-function basis of the continuous PWL interpolant through ``knots``."""
    K = len(knots)
    Phi = np.zeros((len(x), K))
    seg = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, K - 2)
    t = (x - knots[seg]) / (knots[seg + 1] - knots[seg])
    rows = np.arange(len(x))
    Phi[rows, seg] = 1.0 - t
    Phi[rows, seg + 1] = t
    return Phi


def _ls_fit(x, y, knots):
    Phi = _design_matrix(x, knots)
    vals, *_ = np.linalg.lstsq(Phi, y, rcond=None)
    r = Phi @ vals - y
    return vals, float(r @ r)


def _golden(f, a, b, tol):
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _refine(x, y, knots, movable, rel_tol=1e-10, max_sweeps=200):
    knots = knots.copy()
    _, sse = _ls_fit(x, y, knots)
    span = x[-1] - x[0]
    gap = 1e-9 * span
    for _ in range(max_sweeps):
        start = sse
        for k in movable:
            lo = knots[k - 1] + gap if k > 0 else x[0] - 0.5 * span
            hi = knots[k + 1] - gap if k < len(knots) - 1 else x[-1] + 0.5 * span
            if k == 0:
                hi = min(hi, x[-1])
            if k == len(knots) - 1:
                lo = max(lo, x[0])
            if hi <= lo:
                continue

            def f(u, k=k):
                trial = knots.copy()
                trial[k] = u
                return _ls_fit(x, y, trial)[1]

            u, val = _golden(f, lo, hi, 1e-10 * max(span, 1.0))
            if val < sse:
                knots[k], sse = u, val
        if start - sse <= rel_tol * max(start, 1e-300):
            break
    return knots, sse


def fit_pwl(samples, n_breakpoints: int, fix_endpoints: bool = True) -> PwlCurve:
    """Least-squares continuous piecewise-linear fit with free breakpoint positions.

    Breakpoints are added one at a time (each new one splits the segment with
    the largest residual) and every interior position is refined by golden
    section search with the breakpoint values re-fitted by least squares.
    Because each stage starts from the previous optimum, the SSE never grows
    with ``n_breakpoints``. With ``fix_endpoints`` the outer breakpoints stay at
    the sample extremes.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInput("samples must be a sequence of (x, y) pairs")
    if n_breakpoints < 2:
        raise InvalidInput("n_breakpoints must be at least 2")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(np.diff(x) <= 0):
        raise InvalidInput("sample x values must be strictly increasing")
    if len(x) < 2 * n_breakpoints:
        raise InsufficientData(f"need at least {2 * n_breakpoints} samples, got {len(x)}")
    knots = np.array([x[0], x[-1]])
    movable = [] if fix_endpoints else [0, 1]
    knots, sse = _refine(x, y, knots, movable)
    while len(knots) < n_breakpoints:
        vals, _ = _ls_fit(x, y, knots)
        resid = (_design_matrix(x, knots) @ vals - y) ** 2
        seg = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, len(knots) - 2)
        per_seg = np.bincount(seg, weights=resid, minlength=len(knots) - 1)
        widths = np.diff(knots)
        order = np.lexsort((-widths, -per_seg))
        k = int(order[0])
        knots = np.insert(knots, k + 1, 0.5 * (knots[k] + knots[k + 1]))
        K = len(knots)
        movable = list(range(1, K - 1)) if fix_endpoints else list(range(K))
        knots, sse = _refine(x, y, knots, movable)
    vals, _ = _ls_fit(x, y, knots)
    return PwlCurve(tuple(zip(knots.tolist(), vals.tolist())))


def curve_sse(curve: PwlCurve, samples) -> float:
    pts = np.asarray(samples, dtype=float)
    r = curve(pts[:, 0]) - pts[:, 1]
    return float(r @ r)


# ---------------------------------------------------------------- JSON


def _num(v, path):
    if isinstance(v, bool):
        raise ModelSchemaError(path, "expected a number")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            pass
    raise ModelSchemaError(path, f"expected a number, got {v!r}")


def _dec(v: float) -> str:
    return repr(float(v))


def _curve_from(obj, path):
    if isinstance(obj, str):
        if obj not in DEFAULT_CURVES:
            raise ModelSchemaError(path, f"unknown default curve {obj!r}")
        return DEFAULT_CURVES[obj]
    if not isinstance(obj, list):
        raise ModelSchemaError(path, "expected a list of [lambda_out, lambda_in] pairs or a default curve name")
    pts = []
    for i, p in enumerate(obj):
        if not isinstance(p, (list, tuple)) or len(p) != 2:
            raise ModelSchemaError(f"{path}[{i}]", "expected [lambda_out, lambda_in]")
        pts.append((_num(p[0], f"{path}[{i}][0]"), _num(p[1], f"{path}[{i}][1]")))
    try:
        return PwlCurve(tuple(pts)).check_part_load()
    except InvalidInput as exc:
        raise ModelSchemaError(path, str(exc)) from None


def _eta_from(obj, path):
    if isinstance(obj, dict):
        if "t_hp" not in obj:
            raise ModelSchemaError(path, "heat-pump efficiency needs 't_hp' (K)")
        return HeatPumpLaw(_num(obj["t_hp"], f"{path}.t_hp"))
    return _num(obj, path)


def _eta_to(eta):
    return {"t_hp": _dec(eta.t_hp)} if isinstance(eta, HeatPumpLaw) else _dec(eta)


def _pairs(obj, path):
    if obj is None:
        return None
    if not isinstance(obj, list):
        raise ModelSchemaError(path, "expected a list of pairs")
    return tuple((_num(p[0], f"{path}[{i}][0]"), _num(p[1], f"{path}[{i}][1]")) for i, p in enumerate(obj))


def _bounds(obj, path, default=(0.0, 1e4)):
    if obj is None:
        return default
    if not isinstance(obj, list) or len(obj) != 2:
        raise ModelSchemaError(path, "expected [E_min, E_max]")
    return (_num(obj[0], f"{path}[0]"), _num(obj[1], f"{path}[1]"))


def _require(d, key, path):
    if not isinstance(d, dict):
        raise ModelSchemaError(path, "expected an object")
    if key not in d:
        raise ModelSchemaError(f"{path}.{key}", "missing required field")
    return d[key]


def model_from_dict(doc: dict) -> SystemModel:
    """Parse a model document; schema errors name the offending path."""
    if not isinstance(doc, dict):
        raise ModelSchemaError("$", "expected an object")
    forms = _require(doc, "forms", "$")
    if not isinstance(forms, list) or not all(isinstance(f, str) for f in forms):
        raise ModelSchemaError("$.forms", "expected a list of strings")
    converters = []
    for i, c in enumerate(doc.get("converters", [])):
        p = f"$.converters[{i}]"
        outs = []
        for k, o in enumerate(_require(c, "outputs", p)):
            q = f"{p}.outputs[{k}]"
            outs.append(ConverterOutput(
                form=str(_require(o, "form", q)),
                curve=_curve_from(_require(o, "curve", q), f"{q}.curve"),
                eta_nom=_eta_from(o["eta_nom"], f"{q}.eta_nom") if "eta_nom" in o else None,
                nominal_ratio=_num(o.get("nominal_ratio", 1.0), f"{q}.nominal_ratio"),
            ))
        try:
            converters.append(Converter(
                name=str(_require(c, "name", p)),
                input=str(_require(c, "input", p)),
                outputs=tuple(outs),
                eta_nom=_eta_from(c.get("eta_nom", 1.0), f"{p}.eta_nom"),
                capacity_bounds=_bounds(c.get("capacity_bounds"), f"{p}.capacity_bounds"),
                capex_segments=_pairs(c.get("capex_segments"), f"{p}.capex_segments"),
                maintenance_factor=_num(c.get("maintenance_factor", 0.0), f"{p}.maintenance_factor"),
            ))
        except InvalidInput as exc:
            if isinstance(exc, ModelSchemaError):
                raise
            raise ModelSchemaError(p, str(exc)) from None
    storages = []
    for i, s in enumerate(doc.get("storages", [])):
        p = f"$.storages[{i}]"
        pol = s.get("init_policy", {"fixed_fraction": 0.5})
        if pol == "design_variable":
            policy = DesignVariable()
        elif isinstance(pol, dict) and "fixed_fraction" in pol:
            policy = FixedFraction(_num(pol["fixed_fraction"], f"{p}.init_policy.fixed_fraction"))
        else:
            raise ModelSchemaError(f"{p}.init_policy", "expected 'design_variable' or {'fixed_fraction': f}")
        try:
            storages.append(Storage(
                name=str(_require(s, "name", p)),
                form=str(_require(s, "form", p)),
                eta_in=_num(s.get("eta_in", 1.0), f"{p}.eta_in"),
                eta_out=_num(s.get("eta_out", 1.0), f"{p}.eta_out"),
                tau=_num(s.get("tau", 1e6), f"{p}.tau"),
                gamma_sto=_num(s.get("gamma_sto", THERMAL_GAMMA_STO), f"{p}.gamma_sto"),
                init_policy=policy,
                capacity_bounds=_bounds(s.get("capacity_bounds"), f"{p}.capacity_bounds"),
                capex_segments=_pairs(s.get("capex_segments"), f"{p}.capex_segments"),
                maintenance_factor=_num(s.get("maintenance_factor", 0.0), f"{p}.maintenance_factor"),
            ))
        except InvalidInput as exc:
            if isinstance(exc, ModelSchemaError):
                raise
            raise ModelSchemaError(p, str(exc)) from None
    solar = []
    for i, s in enumerate(doc.get("solar", [])):
        p = f"$.solar[{i}]"
        try:
            solar.append(SolarSource(
                name=str(_require(s, "name", p)),
                form=str(_require(s, "form", p)),
                capacity_bounds=_bounds(s.get("capacity_bounds"), f"{p}.capacity_bounds"),
                capex_segments=_pairs(s.get("capex_segments"), f"{p}.capex_segments"),
                maintenance_factor=_num(s.get("maintenance_factor", 0.0), f"{p}.maintenance_factor"),
            ))
        except InvalidInput as exc:
            if isinstance(exc, ModelSchemaError):
                raise
            raise ModelSchemaError(p, str(exc)) from None
    econ = doc.get("economics", {})
    if not isinstance(econ, dict):
        raise ModelSchemaError("$.economics", "expected an object")
    try:
        economics = Economics(**{k: _num(v, f"$.economics.{k}") for k, v in econ.items()
                                 if k in ("interest_rate", "horizon_years", "gamma_fuel", "delta_t")})
        unknown = set(econ) - {"interest_rate", "horizon_years", "gamma_fuel", "delta_t"}
        if unknown:
            raise ModelSchemaError(f"$.economics.{sorted(unknown)[0]}", "unknown field")
        n_copies = doc.get("n_copies", 2)
        if not isinstance(n_copies, int) or isinstance(n_copies, bool):
            raise ModelSchemaError("$.n_copies", "expected an integer")
        return SystemModel(tuple(forms), tuple(converters), tuple(storages), tuple(solar), n_copies, economics)
    except ModelSchemaError:
        raise
    except InvalidInput as exc:
        raise ModelSchemaError("$", str(exc)) from None


def _comp_common(c) -> dict:
    d = {"name": c.name, "capacity_bounds": [_dec(v) for v in c.capacity_bounds],
         "maintenance_factor": _dec(c.maintenance_factor)}
    if c.capex_segments is not None:
        d["capex_segments"] = [[_dec(e), _dec(v)] for e, v in c.capex_segments]
    return d


def model_to_dict(model: SystemModel) -> dict:
    convs = []
    for c in model.converters:
        d = _comp_common(c)
        d.update(input=c.input, eta_nom=_eta_to(c.eta_nom), outputs=[])
        for o in c.outputs:
            od = {"form": o.form, "curve": [[_dec(a), _dec(b)] for a, b in o.curve.breakpoints],
                  "nominal_ratio": _dec(o.nominal_ratio)}
            if o.eta_nom is not None:
                od["eta_nom"] = _eta_to(o.eta_nom)
            d["outputs"].append(od)
        convs.append(d)
    stos = []
    for s in model.storages:
        d = _comp_common(s)
        pol = ("design_variable" if isinstance(s.init_policy, DesignVariable)
               else {"fixed_fraction": _dec(s.init_policy.fraction)})
        d.update(form=s.form, eta_in=_dec(s.eta_in), eta_out=_dec(s.eta_out), tau=_dec(s.tau),
                 gamma_sto=_dec(s.gamma_sto), init_policy=pol)
        stos.append(d)
    sol = []
    for s in model.solar:
        d = _comp_common(s)
        d["form"] = s.form
        sol.append(d)
    e = model.economics
    return {
        "forms": list(model.form_ids),
        "converters": convs,
        "storages": stos,
        "solar": sol,
        "economics": {"interest_rate": _dec(e.interest_rate), "horizon_years": _dec(e.horizon_years),
                      "gamma_fuel": _dec(e.gamma_fuel), "delta_t": _dec(e.delta_t)},
        "n_copies": model.n_copies,
    }


def load_model(path) -> SystemModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelSchemaError("$", f"invalid JSON: {exc}") from None
    return model_from_dict(doc)


def save_model(model: SystemModel, path):
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def load_design(path) -> Design:
    try:
        return Design.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ModelSchemaError("design", f"invalid JSON: {exc}") from None
