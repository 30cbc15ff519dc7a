"""Global maximization of bilinear programs by McCormick relaxation and spatial branch-and-bound.

A program is ``max c'x`` over linear rows and finite variable bounds, plus
product definitions ``x_w = x_a * x_b``.  The ``a`` factor of each product is
the branching factor; every relaxation replaces the product by its McCormick
envelope over the node box of ``x_a`` and the global box of ``x_b``.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import InvalidInput
from ..milp import EQ, GE, LE, MilpInstance, Status, solve_lp

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BilinearProgram:
    """``max c'x + offset`` s.t. ``A x (senses) rhs``, ``lb <= x <= ub``, ``x[w] = x[a] * x[b]``.

    ``products`` is an integer array of rows ``(w, a, b)``.  ``evaluate`` is an
    optional callable ``x_a-values -> (value, x)`` returning a feasible point
    with the branching factors fixed (used for incumbents); without it the
    linear program obtained by fixing every branching factor is solved.
    """

    c: np.ndarray
    A: sp.csr_matrix
    senses: tuple
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    products: np.ndarray
    names: tuple = ()
    offset: float = 0.0
    evaluate: object = field(default=None, repr=False)

    def __post_init__(self):
        P = np.asarray(self.products, dtype=int).reshape(-1, 3)
        object.__setattr__(self, "products", P)
        object.__setattr__(self, "A", sp.csr_matrix(self.A))
        n = len(self.c)
        if self.A.shape[1] != n or len(self.lb) != n or len(self.ub) != n:
            raise InvalidInput("program dimensions do not match")
        for col in (P[:, 1], P[:, 2]):
            if col.size and not (np.all(np.isfinite(self.lb[col])) and np.all(np.isfinite(self.ub[col]))):
                raise InvalidInput("every factor of a bilinear term needs finite bounds")

    @property
    def n_products(self) -> int:
        return self.products.shape[0]

    @property
    def branch_vars(self) -> np.ndarray:
        return np.unique(self.products[:, 1])

    def objective(self, x) -> float:
        return float(self.c @ x + self.offset)

    def violation(self, x) -> float:
        """Largest violation of rows, bounds and product definitions at ``x``."""
        inst = MilpInstance(-self.c, self.A, self.senses, self.rhs, self.lb, self.ub, np.zeros(len(self.c), bool))
        prod = 0.0
        if self.n_products:
            w, a, b = self.products.T
            prod = float(np.max(np.abs(x[w] - x[a] * x[b])))
        return max(inst.max_violation(x), prod)


@dataclass
class BilinearResult:
    status: str  # "optimal", "node_limit" or "infeasible"
    x: np.ndarray | None
    value: float
    bound: float
    nodes: int
    history: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.bound - self.value


def mccormick_rows(products, a_lo, a_hi, b_lo, b_hi, n):
    """The four envelope rows of every product, all as ``<=`` rows: (A, rhs)."""
    w, a, b = (np.asarray(v) for v in products.T)
    al, au, bl, bu = a_lo[a], a_hi[a], b_lo[b], b_hi[b]
    P = w.size
    k = np.arange(P)
    # w >= al*b + bl*a - al*bl  ->  -w + al*b + bl*a <= al*bl
    # w >= au*b + bu*a - au*bu  ->  -w + au*b + bu*a <= au*bu
    # w <= au*b + bl*a - au*bl
    # w <= al*b + bu*a - al*bu
    rows, cols, vals, rhs = [], [], [], []
    for r, (sw, ca, cb, rr) in enumerate((
        (-1.0, bl, al, al * bl),
        (-1.0, bu, au, au * bu),
        (1.0, -bl, -au, -au * bl),
        (1.0, -bu, -al, -al * bu),
    )):
        ridx = r * P + k
        rows += [ridx, ridx, ridx]
        cols += [w, a, b]
        vals += [np.full(P, sw), ca, cb]
        rhs.append(rr)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    # a == b (squares) would sum duplicate entries, which is still the right envelope
    M = sp.csr_matrix((vals, (rows, cols)), shape=(4 * P, n))
    return M, np.concatenate(rhs)


def _relaxation(prog: BilinearProgram, lo, hi, extra=None) -> MilpInstance:
    n = len(prog.c)
    blocks, rhs, senses = [prog.A], [prog.rhs], list(prog.senses)
    if prog.n_products:
        M, r = mccormick_rows(prog.products, lo, hi, lo, hi, n)
        blocks.append(M)
        rhs.append(r)
        senses += [LE] * M.shape[0]
    if extra is not None:
        row, sense, value = extra
        blocks.append(sp.csr_matrix(row.reshape(1, -1)))
        rhs.append(np.array([value]))
        senses.append(sense)
    A = sp.vstack(blocks).tocsr() if len(blocks) > 1 else prog.A
    return MilpInstance(-prog.c, A, tuple(senses), np.concatenate(rhs), lo, hi, np.zeros(n, dtype=bool),
                        offset=-prog.offset)


def _fix_and_solve(prog: BilinearProgram, xa: dict, backend):
    """Feasible point with the branching factors fixed at ``xa`` (linear program)."""
    n = len(prog.c)
    lb, ub = prog.lb.copy(), prog.ub.copy()
    for j, v in xa.items():
        lb[j] = ub[j] = v
    rows, cols, vals = [], [], []
    for k, (w, a, b) in enumerate(prog.products):
        rows += [k, k]
        cols += [w, b]
        vals += [1.0, -lb[a]]
    P = prog.n_products
    E = sp.csr_matrix((vals, (rows, cols)), shape=(P, n))
    A = sp.vstack([prog.A, E]).tocsr()
    inst = MilpInstance(-prog.c, A, tuple(prog.senses) + (EQ,) * P, np.concatenate([prog.rhs, np.zeros(P)]),
                        lb, ub, np.zeros(n, dtype=bool), offset=-prog.offset)
    sol = solve_lp(inst, backend=backend)
    if sol.status is not Status.OPTIMAL:
        return -np.inf, None
    return -sol.objective, sol.x


def _evaluate(prog, x, backend):
    branch = prog.branch_vars
    xa = {int(j): float(np.clip(x[j], prog.lb[j], prog.ub[j])) for j in branch}
    if prog.evaluate is not None:
        return prog.evaluate(xa)
    return _fix_and_solve(prog, xa, backend)


def tighten_bounds(prog: BilinearProgram, lo, hi, cols, cutoff=None, backend=None):
    """Optimization-based bound tightening of ``cols`` over the root relaxation.

    ``cutoff`` adds ``c'x + offset >= cutoff``.  Returns new (lo, hi), or
    None when the relaxation (with the cutoff) is infeasible.
    """
    lo, hi = lo.copy(), hi.copy()
    extra = None
    if cutoff is not None and np.isfinite(cutoff):
        extra = (prog.c.copy(), GE, cutoff - prog.offset)
    for j in cols:
        for direction in (1.0, -1.0):
            inst = _relaxation(prog, lo, hi, extra)
            c = np.zeros(len(prog.c))
            c[j] = direction
            inst = MilpInstance(c, inst.A, inst.senses, inst.rhs, inst.lb, inst.ub, inst.integrality)
            sol = solve_lp(inst, backend=backend)
            if sol.status is Status.INFEASIBLE:
                return None
            if sol.status is not Status.OPTIMAL:
                continue
            v = sol.objective * direction
            pad = 1e-9 * max(1.0, abs(v))
            # LP tolerances may overshoot the opposite bound slightly
            if direction > 0:
                lo[j] = min(max(lo[j], v - pad), hi[j])
            else:
                hi[j] = max(min(hi[j], v + pad), lo[j])
    return lo, hi


def _factor_rows(prog):
    """Rows whose columns are all branching factors (e.g. ``sum(theta) == 1``)."""
    fac = np.zeros(len(prog.c), dtype=bool)
    fac[prog.branch_vars] = True
    A = prog.A.tocsr()
    out = []
    for r in range(A.shape[0]):
        cols = A.indices[A.indptr[r]:A.indptr[r + 1]]
        if cols.size and fac[cols].all():
            out.append((cols, A.data[A.indptr[r]:A.indptr[r + 1]], prog.senses[r], prog.rhs[r]))
    return out


def _propagate(rows, lo, hi, sweeps=3):
    """Interval propagation of linear rows over the factor box; False if the box is empty."""
    for _ in range(sweeps):
        changed = False
        for cols, vals, sense, rhs in rows:
            # row as sum(v*x) <= rhs (LE/EQ) and/or >= rhs (GE/EQ)
            for sign in ((1.0,) if sense == LE else (-1.0,) if sense == GE else (1.0, -1.0)):
                v = sign * vals
                mins = np.where(v > 0, v * lo[cols], v * hi[cols])
                total = mins.sum()
                if not np.isfinite(total):
                    continue
                for k, j in enumerate(cols):
                    slack = sign * rhs - (total - mins[k])
                    if v[k] > 0:
                        new = slack / v[k]
                        if new < hi[j] - 1e-12:
                            hi[j] = new
                            changed = True
                    elif v[k] < 0:
                        new = slack / v[k]
                        if new > lo[j] + 1e-12:
                            lo[j] = new
                            changed = True
        if np.any(lo > hi + 1e-9):
            return False
        if not changed:
            break
    np.minimum(lo, hi, out=lo)
    return True


def _branch_choice(prog, x, lo, hi, weights):
    w, a, b = prog.products.T
    viol = np.abs(x[w] - x[a] * x[b]) * weights
    viol[hi[a] - lo[a] <= 1e-12] = -1.0
    k = int(np.argmax(viol))
    return (int(a[k]), float(viol[k])) if viol[k] > 0 else (-1, 0.0)


def solve_bilinear_global(prog: BilinearProgram, rel_gap: float = 1e-4, abs_gap: float = 1e-6,
                          node_limit: int = 5000, backend=None, workers: int = 1, obbt: list | None = None,
                          target: float | None = None, range_reduction: int = 32) -> BilinearResult:
    """Maximize ``prog`` to ``bound - value <= max(rel_gap*|value|, abs_gap)``.

    Nodes are explored best-bound first.  At each node the relaxation point
    is turned into a feasible incumbent by fixing the branching factors; the
    node is split at the midpoint of the branching factor of the product with
    the largest (coefficient-weighted) envelope violation.  ``obbt`` lists
    columns whose bounds are tightened at the root.  With ``target`` the
    search also stops once the global bound drops to ``target`` or below.

    When the products have at most ``range_reduction`` distinct non-branching
    factors, those factors are re-tightened at every node against the
    incumbent, which keeps the envelopes tight when the factor boxes start
    wide (e.g. dual multipliers bounded only by a large constant).
    """
    n = len(prog.c)
    lo, hi = prog.lb.astype(float).copy(), prog.ub.astype(float).copy()
    if prog.n_products == 0:
        sol = solve_lp(_relaxation(prog, lo, hi), backend=backend)
        if sol.status is Status.INFEASIBLE:
            return BilinearResult("infeasible", None, -np.inf, -np.inf, 1)
        if sol.status is not Status.OPTIMAL:
            raise InvalidInput(f"linear program is {sol.status.value}")
        v = -sol.objective
        return BilinearResult("optimal", sol.x, v, v, 1, [(1, v, v)])

    Ac = abs(prog.A).tocsc()
    wcol = prog.products[:, 0]
    weights = np.array([Ac[:, j].max() if Ac[:, j].nnz else 1.0 for j in wcol], dtype=float)
    weights = np.maximum(weights, 1e-12) * np.maximum(1.0, np.abs(prog.c[wcol]))

    frows = _factor_rows(prog)
    others = sorted(set(prog.products[:, 2].tolist()) - set(prog.branch_vars.tolist()))
    node_rr = others if 0 < len(others) <= range_reduction else []
    best_x, best_v = None, -np.inf
    if obbt:
        tightened = tighten_bounds(prog, lo, hi, obbt, backend=backend)
        if tightened is None:
            return BilinearResult("infeasible", None, -np.inf, -np.inf, 1)
        lo, hi = tightened

    def solve_node(box):
        nlo, nhi = box  # children own their arrays, so propagation may narrow them in place
        if frows and not _propagate(frows, nlo, nhi):
            return None
        if node_rr:
            tightened = tighten_bounds(prog, nlo, nhi, node_rr, cutoff=best_v, backend=backend)
            if tightened is None:
                return None
            nlo[:], nhi[:] = tightened
        sol = solve_lp(_relaxation(prog, nlo, nhi), backend=backend)
        if sol.status is Status.INFEASIBLE:
            return None
        if sol.status is not Status.OPTIMAL:
            raise InvalidInput(f"relaxation is {sol.status.value}; bound the variables")
        return sol

    def close(bound):
        return bound - best_v <= max(rel_gap * abs(best_v), abs_gap)

    counter = itertools.count()
    heap = []
    nodes = 0
    history = []

    pruned = -np.inf  # largest bound among nodes dropped for being within tolerance

    def process(box, sol):
        nonlocal best_x, best_v, pruned
        if sol is None:
            return
        ub = -sol.objective
        v, x = _evaluate(prog, sol.x, backend)
        if x is not None and v > best_v:
            best_v, best_x = v, x
        if close(ub):
            pruned = max(pruned, ub)
            return
        heapq.heappush(heap, (-ub, next(counter), box, sol))

    root = (lo, hi)
    process(root, solve_node(root))
    nodes = 1
    status = "optimal"
    pool = None
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        pool = ThreadPoolExecutor(workers)
    try:
        while heap:
            bound = max(-heap[0][0], best_v, pruned)
            history.append((nodes, best_v, bound))
            if close(bound) or (target is not None and bound <= target):
                break
            if nodes >= node_limit:
                status = "node_limit"
                break
            batch = []
            while heap and len(batch) < max(1, workers):
                negub, _, box, sol = heapq.heappop(heap)
                if close(-negub):
                    pruned = max(pruned, -negub)
                    continue
                j, _ = _branch_choice(prog, sol.x, box[0], box[1], weights)
                if j < 0:
                    # envelope exact at this point: the relaxation value is attained
                    v, x = _evaluate(prog, sol.x, backend)
                    if x is not None and v > best_v:
                        best_v, best_x = v, x
                    continue
                mid = 0.5 * (box[0][j] + box[1][j])
                left_hi = box[1].copy()
                left_hi[j] = mid
                right_lo = box[0].copy()
                right_lo[j] = mid
                batch += [(box[0].copy(), left_hi), (right_lo, box[1].copy())]
            sols = list(pool.map(solve_node, batch)) if pool else [solve_node(b) for b in batch]
            nodes += len(batch)
            for b, s in zip(batch, sols):
                process(b, s)
    finally:
        if pool:
            pool.shutdown()
    bound = max(-heap[0][0] if heap else -np.inf, pruned, best_v)
    history.append((nodes, best_v, bound))
    if best_x is None:
        return BilinearResult("infeasible" if status == "optimal" else status, None, -np.inf, bound, nodes, history)
    return BilinearResult(status, best_x, best_v, max(bound, best_v), nodes, history)
