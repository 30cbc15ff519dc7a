"""Historical day data, representative-day clustering and convex-hull uncertainty sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvalidInput

SOLAR = "solar_cf"
TAMB = "t_amb"
WEATHER = (SOLAR, TAMB)
DEFAULT_T_AMB = 288.15


@dataclass(frozen=True)
class Scenario:
    """One uncertainty realization over a day: demands per form (kW), PV capacity factor, ambient temperature (K)."""

    demands: dict
    solar_cf: np.ndarray
    t_amb: np.ndarray
    weight: float = 1.0
    name: str = ""

    def __post_init__(self):
        dem = {str(k): np.asarray(v, dtype=float).reshape(-1) for k, v in self.demands.items()}
        object.__setattr__(self, "demands", dem)
        object.__setattr__(self, "solar_cf", np.asarray(self.solar_cf, dtype=float).reshape(-1))
        object.__setattr__(self, "t_amb", np.asarray(self.t_amb, dtype=float).reshape(-1))
        T = self.solar_cf.size
        if self.t_amb.size != T or any(v.size != T for v in dem.values()):
            raise InvalidInput("all scenario channels need the same number of timesteps")
        if any(k in WEATHER for k in dem):
            raise InvalidInput(f"demand channels may not be named {WEATHER}")

    @property
    def n_steps(self) -> int:
        return self.solar_cf.size

    def demand(self, form: str) -> np.ndarray:
        v = self.demands.get(form)
        return np.zeros(self.n_steps) if v is None else v

    def value(self, key) -> float:
        """Value of an uncertainty channel ``(name, t)``; unknown demand channels read as 0."""
        name, t = key
        if name == SOLAR:
            return float(self.solar_cf[t])
        if name == TAMB:
            return float(self.t_amb[t])
        return float(self.demand(name)[t])

    @staticmethod
    def constant(forms_demand: dict, T: int = 1, solar_cf: float = 0.0, t_amb: float = DEFAULT_T_AMB,
                 weight: float = 1.0) -> "Scenario":
        return Scenario({k: np.full(T, float(v)) if np.isscalar(v) else v for k, v in forms_demand.items()},
                        np.full(T, solar_cf), np.full(T, t_amb), weight)


# ---------------------------------------------------------------- historical days

CSV_COLUMNS = ("date", "hour", "heat_kW", "elec_kW", "cool_kW", "solar_cf", "t_amb_K")
CSV_DEMANDS = {"heat_kW": "heat", "elec_kW": "electricity", "cool_kW": "cooling"}
HOURS_PER_DAY = 24


@dataclass(frozen=True, eq=False)
class DayMatrix:
    """Historical days: per channel an ``(n_days, T)`` array.

    Demand channels are keyed by energy form id; ``solar_cf`` and ``t_amb``
    are always present.
    """

    dates: tuple
    channels: dict

    def __post_init__(self):
        ch = {str(k): np.asarray(v, dtype=float) for k, v in self.channels.items()}
        object.__setattr__(self, "dates", tuple(str(d) for d in self.dates))
        n = len(self.dates)
        for w in WEATHER:
            if w not in ch:
                raise InvalidInput(f"day matrix needs a {w!r} channel")
        shapes = {v.shape for v in ch.values()}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2 or next(iter(shapes))[0] != n:
            raise InvalidInput("every channel must be an (n_days, T) array")
        if any(not np.all(np.isfinite(v)) for v in ch.values()):
            raise InvalidInput("day matrix has missing entries")
        cf = ch[SOLAR]
        if np.any(cf < 0) or np.any(cf > 1):
            raise InvalidInput("solar capacity factors must lie in [0, 1]")
        # demand channels first (sorted), then weather
        order = sorted(k for k in ch if k not in WEATHER) + list(WEATHER)
        object.__setattr__(self, "channels", {k: ch[k] for k in order})

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_steps(self) -> int:
        return next(iter(self.channels.values())).shape[1]

    @property
    def demand_channels(self) -> list:
        return [k for k in self.channels if k not in WEATHER]

    def channel_keys(self) -> list:
        """Coordinates ``(channel, t)`` of :meth:`vectors`, channel-major."""
        return [(name, t) for name in self.channels for t in range(self.n_steps)]

    def vectors(self) -> np.ndarray:
        """One row per day with all channel-timestep values."""
        return np.hstack(list(self.channels.values()))

    def scenario(self, d: int, weight: float = 1.0) -> Scenario:
        dem = {k: self.channels[k][d] for k in self.demand_channels}
        return Scenario(dem, self.channels[SOLAR][d], self.channels[TAMB][d], weight, self.dates[d])

    def scenarios(self) -> list:
        return [self.scenario(d) for d in range(self.n_days)]

    def subset(self, days) -> "DayMatrix":
        days = list(days)
        return DayMatrix([self.dates[d] for d in days], {k: v[days] for k, v in self.channels.items()})

    @staticmethod
    def from_scenarios(scenarios) -> "DayMatrix":
        scenarios = list(scenarios)
        forms = sorted({k for s in scenarios for k in s.demands})
        ch = {f: np.array([s.demand(f) for s in scenarios]) for f in forms}
        ch[SOLAR] = np.array([s.solar_cf for s in scenarios])
        ch[TAMB] = np.array([s.t_amb for s in scenarios])
        return DayMatrix([s.name or str(i) for i, s in enumerate(scenarios)], ch)


def resample(values: np.ndarray, T: int) -> np.ndarray:
    """Bucket means of the last axis into ``T`` equal buckets."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    if T < 1 or n % T:
        raise InvalidInput(f"cannot split {n} samples into {T} equal buckets")
    return values.reshape(values.shape[:-1] + (T, n // T)).mean(axis=-1)


def ingest_csv(path, T: int = 12) -> DayMatrix:
    """Read hourly data, group by date and resample every day to ``T`` steps by bucket means."""
    import csv

    from .errors import IncompleteDay

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise FormatError(f"missing column {missing[0]!r}; expected header {','.join(CSV_COLUMNS)}")
        days: dict = {}
        for line, row in enumerate(reader, start=2):
            date = row["date"]
            try:
                hour = int(float(row["hour"]))
            except (TypeError, ValueError):
                raise IncompleteDay(date, f"line {line}: bad hour {row['hour']!r}") from None
            vals = []
            for c in CSV_COLUMNS[2:]:
                try:
                    vals.append(float(row[c]))
                except (TypeError, ValueError):
                    raise IncompleteDay(date, f"day {date!r}: missing {c} at hour {hour}") from None
            days.setdefault(date, {})
            if hour in days[date]:
                raise FormatError(f"day {date!r}: duplicate hour {hour}")
            days[date][hour] = vals
    if not days:
        raise FormatError("no data rows")
    dates = list(days)
    rows = []
    for date in dates:
        hours = days[date]
        if sorted(hours) != list(range(HOURS_PER_DAY)):
            raise IncompleteDay(date, f"day {date!r} has {len(hours)} of {HOURS_PER_DAY} hours")
        rows.append([hours[h] for h in range(HOURS_PER_DAY)])
    arr = np.array(rows)  # (days, 24, 5)
    names = [CSV_DEMANDS[c] for c in CSV_COLUMNS[2:5]] + [SOLAR, TAMB]
    ch = {name: resample(arr[:, :, i], T) for i, name in enumerate(names)}
    try:
        return DayMatrix(dates, ch)
    except InvalidInput as exc:
        raise FormatError(str(exc)) from None


def write_csv(path, dates, hourly: dict):
    """Write hourly channels (``(n_days, 24)`` arrays keyed like :data:`CSV_COLUMNS`) as CSV."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for d, date in enumerate(dates):
            for h in range(HOURS_PER_DAY):
                w.writerow([date, h] + [repr(float(hourly[c][d, h])) for c in CSV_COLUMNS[2:]])


def synthetic_hourly(n_days: int = 30, seed: int = 0) -> tuple:
    """Seeded hourly demand and weather profiles (dates, ``{csv column: (n_days, 24)}``)."""
    rng = np.random.default_rng(seed)
    h = np.arange(HOURS_PER_DAY)
    season = np.cos(2 * np.pi * np.arange(n_days) / max(n_days, 1))[:, None]  # +1 winter, -1 summer
    noise = lambda scale: rng.normal(0.0, scale, (n_days, HOURS_PER_DAY))  # noqa: E731
    daily = 1.0 + 0.1 * rng.standard_normal((n_days, 1))
    heat = daily * (120 + 60 * season + 30 * np.cos(2 * np.pi * (h - 5) / 24)) + noise(5)
    elec = daily * (90 + 35 * np.sin(np.pi * np.clip(h - 6, 0, 14) / 14)) + noise(4)
    cool = daily * (40 - 25 * season + 25 * np.sin(np.pi * np.clip(h - 8, 0, 12) / 12)) + noise(3)
    clear = rng.uniform(0.3, 1.0, (n_days, 1))
    solar = clear * (0.55 - 0.2 * season) * np.sin(np.pi * np.clip(h - 6, 0, 12) / 12)
    t_amb = 283.15 - 8 * season + 5 * np.sin(2 * np.pi * (h - 9) / 24) + rng.normal(0, 1.5, (n_days, 1))
    dates = [f"2019-{1 + d // 28:02d}-{1 + d % 28:02d}" for d in range(n_days)]
    return dates, {"heat_kW": np.maximum(heat, 0.0), "elec_kW": np.maximum(elec, 0.0),
                   "cool_kW": np.maximum(cool, 0.0), "solar_cf": np.clip(solar, 0.0, 1.0), "t_amb_K": t_amb}


def synthetic_days(n_days: int = 30, T: int = 12, seed: int = 0) -> DayMatrix:
    """The synthetic dataset resampled to ``T`` steps, identical to writing and re-ingesting the CSV."""
    dates, hourly = synthetic_hourly(n_days, seed)
    names = [CSV_DEMANDS[c] for c in CSV_COLUMNS[2:5]] + [SOLAR, TAMB]
    return DayMatrix(dates, {n: resample(hourly[c], T) for n, c in zip(names, CSV_COLUMNS[2:])})


# ---------------------------------------------------------------- clustering


@dataclass
class ClusterResult:
    representatives: list
    weights: np.ndarray
    labels: np.ndarray
    inertia: float
    history: list
    zero_variance_columns: list

    def to_dict(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "labels": [int(v) for v in self.labels],
            "inertia": float(self.inertia),
            "zero_variance_columns": [list(c) for c in self.zero_variance_columns],
            "representatives": [scenario_to_dict(s) for s in self.representatives],
        }


def scenario_to_dict(s: Scenario) -> dict:
    return {"name": s.name, "weight": float(s.weight),
            "demands": {k: [float(x) for x in v] for k, v in s.demands.items()},
            "solar_cf": [float(x) for x in s.solar_cf], "t_amb": [float(x) for x in s.t_amb]}


def scenario_from_dict(d: dict) -> Scenario:
    return Scenario(d["demands"], d["solar_cf"], d["t_amb"], float(d.get("weight", 1.0)), d.get("name", ""))


def scenario_weights(counts, total_days: float = 365.0) -> np.ndarray:
    """``365 * n_s / n`` with the last weight absorbing rounding so the sum is exactly 365."""
    counts = np.asarray(counts, dtype=float)
    w = total_days * counts / counts.sum()
    if w.size:
        w[-1] = total_days - float(np.sum(w[:-1]))
    return w


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        i = rng.integers(n) if total <= 0 else int(rng.choice(n, p=d2 / total))
        centers.append(X[i])
        d2 = np.minimum(d2, np.sum((X - X[i]) ** 2, axis=1))
    return np.array(centers)


def _sqdist(X, C):
    return np.sum(X * X, axis=1)[:, None] - 2 * X @ C.T + np.sum(C * C, axis=1)[None, :]


def lloyd(X: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300) -> tuple:
    """One k-means run from k-means++ seeds until assignments stop changing.

    Returns (labels, centers, inertia history).  An empty cluster is re-seeded
    with the point farthest from its center.
    """
    C = _kmeanspp(X, k, rng)
    labels = None
    history = []
    for _ in range(max_iter):
        D = np.maximum(_sqdist(X, C), 0.0)
        new = np.argmin(D, axis=1)
        history.append(float(D[np.arange(len(X)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(D[np.arange(len(X)), labels]))
            labels[far] = j
            counts = np.bincount(labels, minlength=k)
        C = np.array([X[labels == j].mean(axis=0) for j in range(k)])
    D = np.maximum(_sqdist(X, C), 0.0)
    inertia = float(D[np.arange(len(X)), labels].sum())
    history.append(inertia)
    return labels, C, history


def cluster_days(data: DayMatrix, k: int = 4, seed: int = 0, restarts: int = 50, workers: int = 1) -> ClusterResult:
    """k-means on per-column standardized day vectors; representatives are cluster means.

    Restarts use independent child seeds, so the result does not depend on
    ``workers``.  Ties in inertia keep the lowest restart index.
    """
    if not 1 <= k <= data.n_days:
        raise InvalidInput(f"k must lie in [1, {data.n_days}]")
    X = data.vectors()
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    flat = np.flatnonzero(sd == 0)
    keys = data.channel_keys()
    sd = np.where(sd == 0, 1.0, sd)
    Z = (X - mu) / sd
    seeds = np.random.SeedSequence(seed).spawn(restarts)

    def run(ss):
        return lloyd(Z, k, np.random.default_rng(ss))

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            runs = list(ex.map(run, seeds))
    else:
        runs = [run(ss) for ss in seeds]
    best = min(range(len(runs)), key=lambda i: (runs[i][2][-1], i))
    labels, _, history = runs[best]
    # relabel clusters by first appearance for stable output
    order = list(dict.fromkeys(labels.tolist()))
    remap = {old: new for new, old in enumerate(order)}
    labels = np.array([remap[v] for v in labels])
    counts = np.bincount(labels, minlength=k)
    weights = scenario_weights(counts)
    reps = []
    for j in range(k):
        centroid = X[labels == j].mean(axis=0)
        parts = {name: centroid[i * data.n_steps:(i + 1) * data.n_steps] for i, name in enumerate(data.channels)}
        dem = {n: parts[n] for n in data.demand_channels}
        reps.append(Scenario(dem, parts[SOLAR], parts[TAMB], float(weights[j]), f"cluster{j}"))
    return ClusterResult(reps, weights, labels, history[-1], history, [keys[i] for i in flat])


# ---------------------------------------------------------------- uncertainty sets


def extreme_day(data: DayMatrix, design, model, backend=None) -> int:
    """Index of the day with the largest operational energy gap (lowest index on ties)."""
    from .robust import audit_design

    phis = {d: phi for d, phi in audit_design(model, design, data, backend=backend)}
    best = max(phis.values())
    return min(d for d, v in phis.items() if v == best)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def hull_2d(points) -> list:
    """Counter-clockwise convex hull vertices (monotone chain), collinear points dropped."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return hull if len(hull) > 1 else hull[:1]


def hull_halfspaces_2d(vertices) -> list:
    """Facets ``(a, b)`` with ``a . x <= b`` of a counter-clockwise polygon."""
    out = []
    n = len(vertices)
    for i in range(n):
        (x0, y0), (x1, y1) = vertices[i], vertices[(i + 1) % n]
        a = np.array([y1 - y0, x0 - x1])
        out.append((a, float(a @ np.array([x0, y0]))))
    return out


@dataclass(frozen=True, eq=False)
class HullVRep:
    """Convex hull of generator points ``y = sum_d theta_d * Y_d`` over channels ``keys``."""

    generators: np.ndarray
    keys: tuple
    labels: tuple = ()

    def __post_init__(self):
        Y = np.atleast_2d(np.asarray(self.generators, dtype=float))
        keys = tuple(tuple(k) for k in self.keys)
        if Y.shape[0] < 1 or Y.shape[1] != len(keys):
            raise InvalidInput("need at least one generator with one value per key")
        _, first = np.unique(Y, axis=0, return_index=True)
        keep = np.sort(first)
        labels = tuple(self.labels) if self.labels else tuple(str(i) for i in range(Y.shape[0]))
        object.__setattr__(self, "generators", Y[keep])
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "labels", tuple(labels[i] for i in keep))

    @property
    def n_generators(self) -> int:
        return self.generators.shape[0]

    def point(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return theta @ self.generators

    def values(self, theta) -> dict:
        return dict(zip(self.keys, self.point(theta)))

    def varying_keys(self) -> list:
        """Keys whose value differs between generators."""
        Y = self.generators
        return [k for k, j in zip(self.keys, range(Y.shape[1])) if np.ptp(Y[:, j]) > 0]

    def scenario(self, theta, base: Scenario, name: str = "") -> Scenario:
        """``base`` with every hull channel replaced by its value at ``theta``."""
        dem = {k: v.copy() for k, v in base.demands.items()}
        cf, ta = base.solar_cf.copy(), base.t_amb.copy()
        for (ch, t), v in self.values(theta).items():
            if ch == SOLAR:
                cf[t] = v
            elif ch == TAMB:
                ta[t] = v
            else:
                dem.setdefault(ch, np.zeros(base.n_steps))[t] = v
        return Scenario(dem, cf, ta, base.weight, name)

    def contains(self, y, tol: float = 1e-9) -> bool:
        """LP feasibility of ``Y' theta = y``, ``sum theta = 1``, ``theta >= 0``."""
        from scipy.optimize import linprog

        Y = self.generators
        A = np.vstack([Y.T, np.ones(Y.shape[0])])
        b = np.concatenate([np.asarray(y, dtype=float), [1.0]])
        res = linprog(np.zeros(Y.shape[0]), A_ub=np.vstack([A, -A]), b_ub=np.concatenate([b + tol, -b + tol]),
                      bounds=(0, None), method="highs")
        return res.status == 0

    @staticmethod
    def from_days(data: DayMatrix, days=None, channels=None) -> "HullVRep":
        """Hull of (a subset of) historical days over (a subset of) channels."""
        days = list(range(data.n_days)) if days is None else list(days)
        names = list(data.channels) if channels is None else list(channels)
        keys = [(n, t) for n in names for t in range(data.n_steps)]
        Y = np.hstack([data.channels[n][days] for n in names])
        return HullVRep(Y, tuple(keys), tuple(data.dates[d] for d in days))

    def to_dict(self) -> dict:
        return {"keys": [[k[0], int(k[1])] for k in self.keys], "labels": list(self.labels),
                "generators": self.generators.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "HullVRep":
        try:
            keys = tuple((str(ch), int(t)) for ch, t in d["keys"])
            return HullVRep(np.asarray(d["generators"], dtype=float), keys, tuple(d.get("labels", ())))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"hull: expected 'keys' and 'generators' ({exc})") from None

    @staticmethod
    def from_scenarios(scenarios, keys) -> "HullVRep":
        Y = np.array([[s.value(k) for k in keys] for s in scenarios])
        return HullVRep(Y, tuple(keys), tuple(s.name or str(i) for i, s in enumerate(scenarios)))
