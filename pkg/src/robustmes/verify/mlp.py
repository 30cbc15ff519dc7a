"""Worst case over the hull with discretized operational binaries and embedded LP duals.

For every binary pattern ``k`` the continuous operational LP is replaced by
its dual; the uncertainty enters as ``y = sum_d theta_d Y_d`` over the hull
generators, so every uncertain right-hand side or coefficient is affine in
``theta`` and each product ``theta_d * lambda_i`` becomes one bilinear term.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..compile import CompiledOperational, DualProgram, build_operational_milp, form_dual
from ..errors import InvalidInput
from ..milp import EQ, LE, Status, solve_lp, solve_milp
from ..scenarios import HullVRep, Scenario
from .bilinear import BilinearProgram

log = logging.getLogger(__name__)

DEFAULT_DUAL_BOUND = 1e4
DEFAULT_TERM_BUDGET = 20_000


def default_base(hull: HullVRep) -> Scenario:
    """Zero demand, zero solar and the default ambient temperature over the hull's horizon."""
    T = 1 + max(t for _, t in hull.keys)
    return Scenario.constant({}, T)


@dataclass(frozen=True, eq=False)
class Uncertainty:
    """The operational problem of one design together with the hull it is evaluated over."""

    compiled: CompiledOperational
    hull: HullVRep
    base: Scenario
    G: dict  # channel -> values at the generators

    @staticmethod
    def build(model, design, hull: HullVRep, base: Scenario | None = None) -> "Uncertainty":
        base = base or default_base(hull)
        for _, t in hull.keys:
            if t >= base.n_steps:
                raise InvalidInput(f"hull key at step {t} lies outside the {base.n_steps}-step horizon")
        D = hull.n_generators
        scen = [hull.scenario(np.eye(D)[d], base) for d in range(D)]
        compiled = build_operational_milp(model, design, scen[0])
        G = {ch: np.array([s.value(ch) for s in scen]) for ch in compiled.channels}
        return Uncertainty(compiled, hull, base, G)

    @property
    def n_generators(self) -> int:
        return self.hull.n_generators

    def varying(self) -> list:
        return [ch for ch, v in self.G.items() if np.ptp(v) > 0]

    def values(self, theta) -> dict:
        theta = np.asarray(theta, dtype=float)
        return {ch: float(v @ theta) for ch, v in self.G.items()}

    def generator_values(self, d: int) -> dict:
        return {ch: float(v[d]) for ch, v in self.G.items()}

    def scenario(self, theta) -> Scenario:
        return self.hull.scenario(theta, self.base)

    def binaries(self) -> np.ndarray:
        return np.flatnonzero(self.compiled.base.integrality)

    def solve(self, theta, backend=None):
        """Operational MILP at ``theta``: (phi, x)."""
        sol = solve_milp(self.compiled.at(self.values(theta)), backend=backend)
        if not sol.optimal:
            raise RuntimeError(f"operational problem is {sol.status.value}")
        return float(sol.objective), sol.x

    def pattern_of(self, x) -> np.ndarray:
        return np.round(np.asarray(x)[self.binaries()]).astype(float)

    def fixed_lp(self, pattern, theta=None, values=None, backend=None):
        """Operational LP with the binaries fixed to ``pattern``."""
        values = self.values(theta) if values is None else values
        inst = self.compiled.at(values)
        b = self.binaries()
        lb, ub = inst.lb.copy(), inst.ub.copy()
        lb[b] = ub[b] = pattern
        return solve_lp(inst.with_bounds(lb, ub), backend=backend)


class PatternSet:
    """Deduplicated list of complete binary assignments of the operational problem."""

    def __init__(self, patterns=()):
        self._items: list = []
        self._keys: set = set()
        for p in patterns:
            self.add(p)

    def add(self, pattern) -> bool:
        p = np.round(np.asarray(pattern, dtype=float)).reshape(-1)
        key = p.tobytes()
        if key in self._keys:
            return False
        self._keys.add(key)
        self._items.append(p)
        return True

    def __contains__(self, pattern) -> bool:
        return np.round(np.asarray(pattern, dtype=float)).reshape(-1).tobytes() in self._keys

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, k):
        return self._items[k]

    def to_list(self) -> list:
        return [p.astype(int).tolist() for p in self._items]


def lp_duals(dual: DualProgram, sol) -> np.ndarray:
    """Multipliers of the rows of ``dual`` from a solved fixed-pattern operational LP.

    Row multipliers map with the row sign (``>=`` rows were negated); finite
    column bounds take the positive or negative part of the reduced cost.
    """
    y = np.asarray(sol.duals, dtype=float)
    d = np.asarray(sol.reduced_costs, dtype=float)
    lam = np.zeros(len(dual.row_origin))
    seen = {}
    for i, (kind, idx, sign) in enumerate(dual.row_origin):
        if kind == "row":
            if dual.free[i]:
                lam[i] = y[idx]
            elif idx in seen:  # second half of a split equality
                lam[seen[idx]] = min(y[idx], 0.0)
                lam[i] = min(-y[idx], 0.0)
            else:
                seen[idx] = i
                lam[i] = sign * y[idx]
        elif kind == "lb":
            lam[i] = -max(d[idx], 0.0)
        else:
            lam[i] = min(d[idx], 0.0)
    return lam


@dataclass(frozen=True, eq=False)
class PatternBlock:
    """Column and row positions of one pattern inside the bilinear program."""

    dual: DualProgram
    lam: np.ndarray
    w: dict  # (row, generator) -> column
    z: np.ndarray | None
    u: dict  # (cont column, generator) -> column
    phi_row: int
    dual_rows: range
    primal_rows: range | None
    uncertain_rows: tuple


@dataclass(frozen=True, eq=False)
class MlpProgram:
    """The bilinear program together with its variable map and exact evaluator."""

    program: BilinearProgram
    theta: np.ndarray
    phi: int
    blocks: tuple
    unc: Uncertainty
    patterns: tuple
    dual_bound: float
    embed_primal: bool
    warnings: list = field(default_factory=list)

    @property
    def n_bilinear(self) -> int:
        return self.program.n_products

    def theta_of(self, x) -> np.ndarray:
        t = np.clip(np.asarray(x)[self.theta], 0.0, None)
        return t / t.sum()

    def strong_duality_residuals(self, x) -> list:
        """|dual objective - primal objective| per pattern at the program point ``x``."""
        out = []
        theta = np.asarray(x)[self.theta]
        vals = self.unc.values(theta)
        for blk in self.blocks:
            A, b = blk.dual.at(vals)
            lam = x[blk.lam]
            dual_obj = float(b @ lam)
            if blk.z is not None:
                out.append(abs(dual_obj - float(blk.dual.c @ x[blk.z])))
            else:
                sol_obj = self.unc.fixed_lp(blk.dual.pattern, values=vals)
                out.append(abs(dual_obj + blk.dual.offset - sol_obj.objective))
        return out


def _phi_dual_rows(dual: DualProgram, phi_col: int) -> np.ndarray:
    """Rows whose multiplier lies in [-1, 0] because ``phi`` has coefficient -1 in each of them.

    The dual row for ``phi`` reads ``sum_i a_i lam_i = 1``; when every
    ``a_i = -1`` and every such ``lam_i <= 0``, each ``lam_i`` is at least -1.
    """
    col = dual.A_c.tocsc()[:, phi_col]
    rows = col.indices
    if rows.size and np.all(col.data == -1.0) and not np.any(dual.free[rows]) and dual.c[phi_col] == 1.0:
        return rows
    return np.array([], dtype=int)


def build_mlp_dual_disc(unc: Uncertainty, patterns, *, dual_bound: float = DEFAULT_DUAL_BOUND,
                        embed_primal: bool = True, term_budget: int = DEFAULT_TERM_BUDGET,
                        backend=None) -> MlpProgram:
    """Bilinear program ``max phi`` with one dual block (and optionally one primal block) per pattern."""
    if dual_bound is None or not np.isfinite(dual_bound) or dual_bound <= 0:
        raise InvalidInput("the dual variables need a finite positive bound L")
    patterns = tuple(patterns)
    if not patterns:
        raise InvalidInput("at least one pattern is required")
    L = float(dual_bound)
    D = unc.n_generators
    gvals = [unc.generator_values(d) for d in range(D)]
    varying = set(unc.varying())
    compiled = unc.compiled
    phi_full = compiled.phi

    lb, ub, names = [], [], []
    products = []

    def var(name, lo, hi):
        lb.append(lo)
        ub.append(hi)
        names.append(name)
        return len(names) - 1

    theta = np.array([var(("theta", d), 0.0, 1.0) for d in range(D)])
    phi = var(("phi",), -np.inf, np.inf)
    rows, senses, rhs = [], [], []  # rows as {col: coef}

    def row(coeffs, sense, value):
        rows.append(coeffs)
        senses.append(sense)
        rhs.append(float(value))
        return len(rows) - 1

    row({int(t): 1.0 for t in theta}, EQ, 1.0)
    blocks = []
    n_terms = 0
    for k, z in enumerate(patterns):
        dual = form_dual(compiled, z, split_equalities=False)
        m, n = dual.shape
        At = [dual.at(g) for g in gvals]
        bs = np.array([b for _, b in At])  # D x m
        unc_b = set(np.flatnonzero(np.ptp(bs, axis=0) > 0).tolist()) if D > 1 else set()
        unc_entries = sorted({(t.row, t.col) for t in dual.coef_terms if t.channel in varying})
        U = sorted(unc_b | {i for i, _ in unc_entries})
        ucols = sorted({j for _, j in unc_entries})
        n_terms += len(U) * D + (len(ucols) * D if embed_primal else 0)
        if n_terms > term_budget:
            raise InvalidInput(f"{n_terms} bilinear terms exceed the budget of {term_budget}; "
                               "reduce the hull or the horizon")
        # multipliers
        phi_local = int(np.flatnonzero(dual.cont_cols == phi_full)[0])
        tight = set(_phi_dual_rows(dual, phi_local).tolist())
        lam = np.array([var(("lam", k, i), -1.0 if i in tight else -L, L if dual.free[i] else 0.0)
                        for i in range(m)])
        w = {}
        for i in U:
            for d in range(D):
                w[(i, d)] = var(("w", k, i, d), -np.inf, np.inf)
                products.append((w[(i, d)], theta[d], lam[i]))
        # constant part of A_c (uncertain entries handled through w)
        A0 = At[0][0].tolil(copy=True)
        for i, j in unc_entries:
            A0[i, j] = 0.0
        A0 = A0.tocsr()
        Aent = {(i, j): np.array([At[d][0][i, j] for d in range(D)]) for i, j in unc_entries}
        b0 = bs[0]
        Uset = set(U)
        # phi <= b(theta)' lam + offset
        coeffs = {phi: 1.0}
        for i in range(m):
            if i not in Uset and b0[i] != 0.0:
                coeffs[int(lam[i])] = -b0[i]
        for (i, d), col in w.items():
            if bs[d, i] != 0.0:
                coeffs[col] = -bs[d, i]
        phi_row = row(coeffs, LE, dual.offset)
        # A_c(theta)' lam = c
        A0T = A0.T.tocsr()
        first = len(rows)
        for j in range(n):
            p0, p1 = A0T.indptr[j], A0T.indptr[j + 1]
            coeffs = {int(lam[i]): v for i, v in zip(A0T.indices[p0:p1], A0T.data[p0:p1]) if v != 0.0}
            for (i, jj), vals in Aent.items():
                if jj == j:
                    for d in range(D):
                        if vals[d] != 0.0:
                            coeffs[w[(i, d)]] = coeffs.get(w[(i, d)], 0.0) + vals[d]
            row(coeffs, EQ, dual.c[j])
        dual_rows = range(first, len(rows))
        for i in U:
            c = {w[(i, d)]: 1.0 for d in range(D)}
            c[int(lam[i])] = -1.0
            row(c, EQ, 0.0)
        zcols, u, prim = None, {}, None
        if embed_primal:
            base = compiled.base
            zl, zu = base.lb[dual.cont_cols], base.ub[dual.cont_cols]
            zcols = np.array([var(("z", k, j), zl[j], zu[j]) for j in range(n)])
            for j in ucols:
                if not (np.isfinite(zl[j]) and np.isfinite(zu[j])):
                    raise InvalidInput(f"column {base.names[dual.cont_cols[j]]} has an uncertain coefficient "
                                       "but no finite bounds")
                for d in range(D):
                    u[(j, d)] = var(("u", k, j, d), -np.inf, np.inf)
                    products.append((u[(j, d)], theta[d], zcols[j]))
            first = len(rows)
            A0r = A0
            for i in range(m):
                p0, p1 = A0r.indptr[i], A0r.indptr[i + 1]
                coeffs = {int(zcols[j]): v for j, v in zip(A0r.indices[p0:p1], A0r.data[p0:p1]) if v != 0.0}
                for (ii, j), vals in Aent.items():
                    if ii == i:
                        for d in range(D):
                            if vals[d] != 0.0:
                                coeffs[u[(j, d)]] = coeffs.get(u[(j, d)], 0.0) + vals[d]
                value = b0[i]
                if i in unc_b:
                    for d in range(D):
                        coeffs[int(theta[d])] = coeffs.get(int(theta[d]), 0.0) - bs[d, i]
                    value = 0.0
                row(coeffs, EQ if dual.free[i] else LE, value)
            prim = range(first, len(rows))
            for j in ucols:
                c = {u[(j, d)]: 1.0 for d in range(D)}
                c[int(zcols[j])] = -1.0
                row(c, EQ, 0.0)
            # strong duality: b(theta)' lam = c' z
            coeffs = {}
            for i in range(m):
                if i not in Uset and b0[i] != 0.0:
                    coeffs[int(lam[i])] = b0[i]
            for (i, d), col in w.items():
                if bs[d, i] != 0.0:
                    coeffs[col] = bs[d, i]
            for j in range(n):
                if dual.c[j] != 0.0:
                    coeffs[int(zcols[j])] = coeffs.get(int(zcols[j]), 0.0) - dual.c[j]
            row(coeffs, EQ, 0.0)
        blocks.append(PatternBlock(dual, lam, w, zcols, u, phi_row, dual_rows, prim, tuple(U)))

    nvar = len(names)
    r_idx, c_idx, vals = [], [], []
    for r, coeffs in enumerate(rows):
        for col, v in coeffs.items():
            r_idx.append(r)
            c_idx.append(col)
            vals.append(v)
    A = sp.csr_matrix((vals, (r_idx, c_idx)), shape=(len(rows), nvar))
    lb = np.array(lb, dtype=float)
    ub = np.array(ub, dtype=float)
    # product columns inherit McCormick-compatible bounds from their factors
    P = np.array(products, dtype=int).reshape(-1, 3)
    for wc, a, b in P:
        cand = np.array([lb[a] * lb[b], lb[a] * ub[b], ub[a] * lb[b], ub[a] * ub[b]])
        lb[wc], ub[wc] = cand.min(), cand.max()
    c = np.zeros(nvar)
    c[phi] = 1.0
    mlp = MlpProgram(None, theta, phi, tuple(blocks), unc, patterns, L, embed_primal)
    prog = BilinearProgram(c, A, tuple(senses), np.array(rhs), lb, ub, P, tuple(names),
                           evaluate=lambda xa: _evaluate(mlp, xa, backend))
    object.__setattr__(mlp, "program", prog)
    return mlp


def _evaluate(mlp: MlpProgram, xa: dict, backend=None):
    """Exact program point at the given theta: per-pattern LP duals and primal solutions."""
    theta = np.array([xa[int(t)] for t in mlp.theta])
    s = theta.sum()
    if s <= 0:
        return -np.inf, None
    theta = theta / s
    vals = mlp.unc.values(theta)
    prog = mlp.program
    x = np.zeros(len(prog.c))
    x[mlp.theta] = theta
    phi = np.inf
    for blk in mlp.blocks:
        sol = mlp.unc.fixed_lp(blk.dual.pattern, values=vals, backend=backend)
        if sol.status is not Status.OPTIMAL:
            log.info("pattern LP is %s at theta=%s", sol.status.value, theta)
            return -np.inf, None
        lam = lp_duals(blk.dual, sol)
        if np.any(np.abs(lam) > 0.99 * mlp.dual_bound):
            msg = f"dual multipliers reach {np.abs(lam).max():.4g}, within 1% of the bound L={mlp.dual_bound:g}"
            if msg not in mlp.warnings:
                mlp.warnings.append(msg)
        lam = np.clip(lam, prog.lb[blk.lam], prog.ub[blk.lam])
        x[blk.lam] = lam
        for (i, d), col in blk.w.items():
            x[col] = theta[d] * lam[i]
        if blk.z is not None:
            zc = sol.x[blk.dual.cont_cols]
            x[blk.z] = zc
            for (j, d), col in blk.u.items():
                x[col] = theta[d] * zc[j]
        phi = min(phi, float(sol.objective))
    x[mlp.phi] = phi
    return phi, x
