"""Storage schedules: complementarity repair and independent feasibility checks."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInput, NotRepairable

CHECK_TOL = 1e-7
COMPLEMENTARITY_TOL = 1e-9
CLAMP = 1e-12


@dataclass(frozen=True)
class StorageSchedule:
    """Storage levels (kWh) and in/out flows (kW) per timestep.

    ``initial_level`` is the level before the first step; ``None`` closes the
    horizon cyclically (the step before ``t=1`` is the last step).
    ``aggregate`` optionally holds the remaining balance terms of the storage's
    energy form (demand plus consumption minus supply) so the balance row can
    be checked as ``aggregate + inflow - outflow <= 0``.
    """

    level: np.ndarray
    inflow: np.ndarray
    outflow: np.ndarray
    eta_in: float = 1.0
    eta_out: float = 1.0
    tau: float = np.inf
    delta_t: float = 1.0
    in_max: float = np.inf
    out_max: float = np.inf
    level_max: float = np.inf
    initial_level: float | None = None
    aggregate: np.ndarray | None = None

    def __post_init__(self):
        for name in ("level", "inflow", "outflow"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if self.aggregate is not None:
            object.__setattr__(self, "aggregate", np.asarray(self.aggregate, dtype=float).reshape(-1))
        T = self.level.size
        if self.inflow.size != T or self.outflow.size != T:
            raise InvalidInput("level, inflow and outflow need one entry per timestep")
        if self.aggregate is not None and self.aggregate.size != T:
            raise InvalidInput("aggregate needs one entry per timestep")

    @property
    def previous_levels(self) -> np.ndarray:
        start = self.level[-1] if self.initial_level is None else self.initial_level
        return np.concatenate([[start], self.level[:-1]])

    def dynamics_residual(self) -> np.ndarray:
        """Per-step residual of the implicit-Euler storage equation."""
        loss = 0.0 if np.isinf(self.tau) else self.delta_t / self.tau
        lhs = self.level * (1.0 + loss) - self.previous_levels
        rhs = self.delta_t * (self.eta_in * self.inflow - self.outflow / self.eta_out)
        return lhs - rhs

    @property
    def net_supply(self) -> np.ndarray:
        return self.outflow - self.inflow


def repair_complementarity(s: StorageSchedule) -> StorageSchedule:
    """Remove simultaneous charging and discharging while keeping every storage level.

    Per step, a non-positive net charge ``eta_in*in - out/eta_out`` becomes pure
    discharging ``(0, out - eta_in*eta_out*in)``; a positive one pure charging
    ``(in - out/(eta_in*eta_out), 0)``.
    """
    k = s.eta_in * s.eta_out
    if k > 1.0:
        raise NotRepairable(f"eta_in*eta_out = {k} exceeds 1; the repair would create energy")
    net = s.eta_in * s.inflow - s.outflow / s.eta_out
    discharging = net <= 0
    new_in = np.where(discharging, 0.0, s.inflow - s.outflow / k)
    new_out = np.where(discharging, s.outflow - k * s.inflow, 0.0)
    new_in[np.abs(new_in) < CLAMP] = 0.0
    new_out[np.abs(new_out) < CLAMP] = 0.0
    return replace(s, inflow=new_in, outflow=new_out)


def verify_schedule(s: StorageSchedule, require_complementarity: bool = False) -> list:
    """List of ``(check, timestep, amount)`` violations; empty iff the schedule is feasible."""
    out = []

    def add(kind, mask, amount):
        for t in np.flatnonzero(mask):
            out.append((kind, int(t), float(amount[t])))

    add("outflow_bounds", (s.outflow < -CHECK_TOL) | (s.outflow > s.out_max + CHECK_TOL),
        np.maximum(-s.outflow, s.outflow - s.out_max))
    add("inflow_bounds", (s.inflow < -CHECK_TOL) | (s.inflow > s.in_max + CHECK_TOL),
        np.maximum(-s.inflow, s.inflow - s.in_max))
    add("level_bounds", (s.level < -CHECK_TOL) | (s.level > s.level_max + CHECK_TOL),
        np.maximum(-s.level, s.level - s.level_max))
    res = s.dynamics_residual()
    add("dynamics", np.abs(res) > CHECK_TOL, np.abs(res))
    if s.aggregate is not None:
        bal = s.aggregate + s.inflow - s.outflow
        add("balance", bal > CHECK_TOL, bal)
    if require_complementarity:
        prod = s.inflow * s.outflow
        add("complementarity", prod > COMPLEMENTARITY_TOL, prod)
    return out


def random_feasible_schedule(rng: np.random.Generator, T: int = 12, *, eta_in=None, eta_out=None,
                             tau=None, delta_t=None) -> StorageSchedule:
    """Draw a schedule that satisfies bounds and dynamics (used by tests and demos)."""
    eta_in = rng.uniform(0.5, 1.0) if eta_in is None else eta_in
    eta_out = rng.uniform(0.5, 1.0) if eta_out is None else eta_out
    tau = (np.inf if rng.random() < 0.2 else rng.uniform(5.0, 500.0)) if tau is None else tau
    delta_t = rng.choice([0.5, 1.0, 2.0]) if delta_t is None else delta_t
    in_max, out_max = rng.uniform(1.0, 20.0, size=2)
    both = rng.random(T) < 0.7
    inflow = rng.uniform(0, in_max, T) * np.where(both | (rng.random(T) < 0.5), 1.0, 0.0)
    outflow = rng.uniform(0, out_max, T) * np.where(both | (inflow == 0), 1.0, 0.0)
    loss = 0.0 if np.isinf(tau) else delta_t / tau
    # levels are affine in the starting level; pick the smallest start keeping them >= 0
    base = np.empty(T)
    prev = 0.0
    for t in range(T):
        prev = (prev + delta_t * (eta_in * inflow[t] - outflow[t] / eta_out)) / (1.0 + loss)
        base[t] = prev
    decay = (1.0 + loss) ** -np.arange(1, T + 1)
    level0 = max(0.0, float(np.max(-base / decay))) + rng.uniform(0.0, 10.0)
    levels = base + level0 * decay
    agg = (outflow - inflow) - rng.uniform(0, 5.0, T)
    return StorageSchedule(levels, inflow, outflow, eta_in, eta_out, tau, delta_t, in_max, out_max,
                           np.inf, level0, agg)
