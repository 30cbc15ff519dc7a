"""Bounded-variable revised primal simplex with dual extraction.

Each row ``a_i x (sense) b_i`` is written as ``a_i x - s_i = 0`` with a
bounded logical column ``s_i``; a ``<=`` row gives ``s_i <= b_i``, a ``>=`` row
``s_i >= b_i`` and an equality row fixes ``s_i = b_i``.  Rows that are violated
at the starting point get an artificial column ``sigma_i e_i`` whose sum is
driven to zero in phase one.

The row multipliers ``y = c_B B^-1`` satisfy ``c = A'y + d`` with ``d`` the
reduced costs, so under minimization a binding ``<=`` row carries ``y_i <= 0``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .instance import EQ, GE, LE, LpSolution, MilpInstance, NumericalFailure, Status

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
DENSE_LIMIT = 100
SMALL_DENSE = 5000


class _DenseInverse:
    refactor_every = 100

    def __init__(self, B):
        lu = sla.lu_factor(B, check_finite=False)
        if np.min(np.abs(np.diag(lu[0])), initial=np.inf) < 1e-11 * max(1.0, np.abs(B).max(initial=0.0)):
            raise np.linalg.LinAlgError("singular basis")
        self.inv = sla.lu_solve(lu, np.eye(B.shape[0]), check_finite=False)
        self.updates = 0

    def ftran(self, v):
        return self.inv @ v

    def btran(self, v):
        return v @ self.inv

    def update(self, r, alpha):
        row = self.inv[r] / alpha[r]
        self.inv -= np.outer(alpha, row)
        self.inv[r] = row
        self.updates += 1


class _SparseLU:
    refactor_every = 60

    def __init__(self, B):
        try:
            self.lu = splu(sp.csc_matrix(B), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(str(exc)) from exc
        diag = np.abs(self.lu.U.diagonal())
        if diag.size and diag.min() < 1e-11 * max(1.0, diag.max()):
            raise np.linalg.LinAlgError("singular basis")
        self.etas: list = []
        self.updates = 0

    def ftran(self, v):
        x = self.lu.solve(np.asarray(v, dtype=float))
        for r, a in self.etas:
            xr = x[r] / a[r]
            x -= xr * a
            x[r] = xr
        return x

    def btran(self, v):
        u = np.array(v, dtype=float)
        for r, a in reversed(self.etas):
            u[r] = (u[r] - (u @ a - u[r] * a[r])) / a[r]
        return self.lu.solve(u, trans="T")

    def update(self, r, alpha):
        self.etas.append((r, alpha.copy()))
        self.updates += 1


class _Simplex:
    def __init__(self, inst: MilpInstance, max_iter=None):
        A = inst.A
        self.m, self.n = m, n = A.shape
        self.inst = inst
        lo_s = np.full(m, -np.inf)
        hi_s = np.full(m, np.inf)
        for i, s in enumerate(inst.senses):
            if s == LE:
                hi_s[i] = inst.rhs[i]
            elif s == GE:
                lo_s[i] = inst.rhs[i]
            else:
                lo_s[i] = hi_s[i] = inst.rhs[i]
        self.lo = np.concatenate([inst.lb, lo_s, np.zeros(m)])
        self.hi = np.concatenate([inst.ub, hi_s, np.zeros(m)])
        self.Acsc = inst.A_csc
        if m * n <= SMALL_DENSE:
            # plain arrays beat sparse dispatch overhead on small problems
            self.Amul = inst.A_dense
            self.AT = self.Amul.T
        else:
            self.Amul = self.Acsc
            self.AT = inst.A_T
        self.sigma = np.ones(m)
        self.max_iter = max_iter if max_iter is not None else 50 * (m + n) + 5000
        self.iterations = 0
        self.dense = m <= DENSE_LIMIT

    # column access over [A, -I, diag(sigma)]
    def column(self, j):
        m, n = self.m, self.n
        v = np.zeros(m)
        if j < n:
            p0, p1 = self.Acsc.indptr[j], self.Acsc.indptr[j + 1]
            v[self.Acsc.indices[p0:p1]] = self.Acsc.data[p0:p1]
        elif j < n + m:
            v[j - n] = -1.0
        else:
            v[j - n - m] = self.sigma[j - n - m]
        return v

    def times_transpose(self, y):
        return np.concatenate([self.AT @ y, -y, self.sigma * y])

    def times(self, x):
        n, m = self.n, self.m
        return self.Amul @ x[:n] - x[n:n + m] + self.sigma * x[n + m:]

    def basis_matrix(self):
        m, n = self.m, self.n
        head = self.head
        if self.dense:
            B = np.zeros((m, m))
            for k, j in enumerate(head):
                B[:, k] = self.column(j)
            return B
        rows, cols, vals = [], [], []
        for k, j in enumerate(head):
            if j < n:
                p0, p1 = self.Acsc.indptr[j], self.Acsc.indptr[j + 1]
                rows.extend(self.Acsc.indices[p0:p1])
                vals.extend(self.Acsc.data[p0:p1])
                cols.extend([k] * (p1 - p0))
            elif j < n + m:
                rows.append(j - n)
                vals.append(-1.0)
                cols.append(k)
            else:
                rows.append(j - n - m)
                vals.append(self.sigma[j - n - m])
                cols.append(k)
        return sp.csc_matrix((vals, (rows, cols)), shape=(m, m))

    def factor(self):
        B = self.basis_matrix()
        self.F = _DenseInverse(B) if self.dense else _SparseLU(B)
        self.recompute_basics()

    def recompute_basics(self):
        x = self.x
        x[self.head] = 0.0
        self.x[self.head] = self.F.ftran(-self.times(x))

    # starting point: nonbasic columns at the bound closest to zero
    def crash(self, x0=None):
        m, n = self.m, self.n
        lo, hi = self.lo, self.hi
        x = np.zeros(n + 2 * m)
        if x0 is None:
            x[:n] = np.where(np.isfinite(lo[:n]), lo[:n], np.where(np.isfinite(hi[:n]), hi[:n], 0.0))
            x[:n] = np.where((lo[:n] <= 0) & (hi[:n] >= 0), 0.0, x[:n])
        else:
            x[:n] = np.clip(x0, lo[:n], hi[:n])
        act = self.Amul @ x[:n]
        head = []
        self.hi[n + m:] = 0.0
        for i in range(m):
            if lo[n + i] - PRIMAL_TOL <= act[i] <= hi[n + i] + PRIMAL_TOL:
                head.append(n + i)
                x[n + i] = act[i]
            else:
                s = hi[n + i] if act[i] > hi[n + i] else lo[n + i]
                x[n + i] = s
                self.sigma[i] = 1.0 if s - act[i] > 0 else -1.0
                self.hi[n + m + i] = np.inf
                head.append(n + m + i)
                x[n + m + i] = abs(s - act[i])
        self.x = x
        self.head = np.array(head, dtype=int)
        self.is_basic = np.zeros(n + 2 * m, dtype=bool)
        self.is_basic[self.head] = True

    def run_phase(self, cost):
        """Iterate to optimality for ``cost``; returns "optimal" or ("unbounded", q, direction)."""
        m, n = self.m, self.n
        lo, hi, x = self.lo, self.hi, self.x
        ncols = n + 2 * m
        degenerate = 0
        bland = False
        verified = False
        scale = max(1.0, float(np.max(np.abs(cost), initial=0.0)))
        dtol = DUAL_TOL * scale
        while True:
            if self.F.updates >= self.F.refactor_every:
                self.factor()
            y = self.F.btran(cost[self.head])
            d = cost - self.times_transpose(y)
            d[self.is_basic] = 0.0
            free = ~np.isfinite(lo) & ~np.isfinite(hi)
            fixed = lo == hi
            at_lo = np.abs(x - lo) <= PRIMAL_TOL
            at_hi = np.abs(x - hi) <= PRIMAL_TOL
            can_up = ~self.is_basic & ~fixed & ~at_hi & (d < -dtol)
            can_down = ~self.is_basic & ~fixed & ~at_lo & (d > dtol)
            can_up |= ~self.is_basic & free & (d < -dtol)
            can_down |= ~self.is_basic & free & (d > dtol)
            eligible = can_up | can_down
            if not eligible.any():
                if verified or self.F.updates == 0:
                    self.y, self.d = y, d
                    return "optimal"
                self.factor()
                verified = True
                continue
            verified = False
            if bland:
                q = int(np.argmax(eligible))
            else:
                score = np.where(eligible, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if can_up[q] else -1.0
            alpha = self.F.ftran(self.column(q))
            delta = -direction * alpha
            xb = x[self.head]
            lob, hib = lo[self.head], hi[self.head]
            big = np.abs(delta) > PIVOT_TOL
            dec = big & (delta < 0)
            inc = big & (delta > 0)
            with np.errstate(divide="ignore", invalid="ignore"):
                relaxed = np.full(m, np.inf)
                relaxed[dec] = (xb[dec] - lob[dec] + PRIMAL_TOL) / -delta[dec]
                relaxed[inc] = (hib[inc] - xb[inc] + PRIMAL_TOL) / delta[inc]
                exact = np.full(m, np.inf)
                exact[dec] = (xb[dec] - lob[dec]) / -delta[dec]
                exact[inc] = (hib[inc] - xb[inc]) / delta[inc]
            tmax = float(np.min(relaxed, initial=np.inf))
            span = hi[q] - x[q] if direction > 0 else x[q] - lo[q]
            if not np.isfinite(tmax) and not np.isfinite(span):
                self.y, self.d = y, d
                return ("unbounded", q, direction, alpha)
            if span <= tmax:
                # bound flip of the entering column
                step = span
                x[q] = hi[q] if direction > 0 else lo[q]
                x[self.head] += step * delta
                leave = -1
            else:
                cand = np.flatnonzero(exact <= tmax)
                if bland:
                    best = exact[cand].min()
                    ties = cand[exact[cand] <= best + 1e-12]
                    r = int(ties[np.argmin(self.head[ties])])
                else:
                    r = int(cand[np.argmax(np.abs(delta[cand]))])
                step = max(float(exact[r]), 0.0)
                x[q] += direction * step
                x[self.head] += step * delta
                leave = int(self.head[r])
                x[leave] = hib[r] if delta[r] > 0 else lob[r]
                self.is_basic[leave] = False
                self.is_basic[q] = True
                self.head[r] = q
                self.F.update(r, alpha)
            self.iterations += 1
            if step <= 1e-12:
                degenerate += 1
                if degenerate > 2 * (m + n):
                    bland = True
            else:
                degenerate = 0
            if self.iterations > self.max_iter:
                raise NumericalFailure(f"simplex iteration limit {self.max_iter} reached")

    def solve(self, x0=None) -> LpSolution:
        m, n = self.m, self.n
        inst = self.inst
        if m == 0:
            return _solve_bounds_only(inst)
        self.crash(x0)
        try:
            self.factor()
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"initial basis singular: {exc}") from exc
        arts = slice(n + m, n + 2 * m)
        if np.any(self.x[arts] > 0):
            cost1 = np.zeros(n + 2 * m)
            cost1[arts] = 1.0
            self._guarded(cost1)
            infeas = float(self.x[arts].sum())
            scale = 1.0 + float(np.max(np.abs(inst.rhs), initial=0.0))
            if infeas > 1e-8 * scale:
                return LpSolution(Status.INFEASIBLE, ray=self.y[:m].copy(), iterations=self.iterations)
        self.hi[arts] = 0.0
        self.x[arts] = np.where(self.is_basic[arts], self.x[arts], 0.0)
        cost = np.zeros(n + 2 * m)
        cost[:n] = inst.c
        res = self._guarded(cost)
        if res != "optimal":
            _, q, direction, alpha = res
            ray = np.zeros(n + 2 * m)
            ray[q] = direction
            ray[self.head] = -direction * alpha
            return LpSolution(Status.UNBOUNDED, ray=ray[:n], iterations=self.iterations)
        xs = self.x[:n].copy()
        return LpSolution(
            Status.OPTIMAL,
            x=xs,
            duals=self.y.copy(),
            reduced_costs=self.d[:n].copy(),
            objective=float(inst.c @ xs + inst.offset),
            iterations=self.iterations,
            basis=(self.head.copy(), self.x.copy(), self.sigma.copy()),
        )

    # ------------------------------------------------------------ warm start
    def warm(self, basis) -> LpSolution | None:
        """Re-optimize from a previous optimal basis after bound changes.

        Runs the dual simplex while the start is dual feasible, then a primal
        clean-up pass.  Returns ``None`` when the basis cannot be reused, so
        the caller can fall back to a cold start.
        """
        m, n = self.m, self.n
        head, x, sigma = basis
        if len(head) != m or len(x) != n + 2 * m:
            return None
        self.sigma = sigma.copy()
        self.head = np.array(head, dtype=int)
        self.is_basic = np.zeros(n + 2 * m, dtype=bool)
        self.is_basic[self.head] = True
        self.hi[n + m:] = 0.0
        x = x.copy()
        nb = ~self.is_basic
        lo, hi = self.lo, self.hi
        # nonbasic columns keep their side unless the bound moved past them
        x[nb] = np.clip(x[nb], lo[nb], hi[nb])
        self.x = x
        try:
            self.factor()
        except np.linalg.LinAlgError:
            return None
        cost = np.zeros(n + 2 * m)
        cost[:n] = self.inst.c
        try:
            res = self.run_dual(cost)
        except (np.linalg.LinAlgError, NumericalFailure):
            return None
        if res == "infeasible":
            return LpSolution(Status.INFEASIBLE, iterations=self.iterations)
        if res != "optimal":
            return None
        try:
            res = self.run_phase(cost)
        except np.linalg.LinAlgError:
            return None
        if res != "optimal":
            return None
        if np.any(self.x[self.head] < lo[self.head] - 1e-7) or np.any(self.x[self.head] > hi[self.head] + 1e-7):
            return None
        xs = self.x[:n].copy()
        return LpSolution(
            Status.OPTIMAL, x=xs, duals=self.y.copy(), reduced_costs=self.d[:n].copy(),
            objective=float(self.inst.c @ xs + self.inst.offset), iterations=self.iterations,
            basis=(self.head.copy(), self.x.copy(), self.sigma.copy()),
        )

    def run_dual(self, cost):
        """Bounded dual simplex; returns "optimal", "infeasible" or "not_dual_feasible"."""
        m, n = self.m, self.n
        lo, hi, x = self.lo, self.hi, self.x
        scale = max(1.0, float(np.max(np.abs(cost), initial=0.0)))
        dtol = 1e-7 * scale
        limit = self.iterations + 20 * (m + n) + 1000
        while True:
            if self.F.updates >= self.F.refactor_every:
                self.factor()
            y = self.F.btran(cost[self.head])
            d = cost - self.times_transpose(y)
            d[self.is_basic] = 0.0
            nb = ~self.is_basic
            fixed = lo == hi
            at_lo = nb & ~fixed & (np.abs(x - lo) <= PRIMAL_TOL)
            at_hi = nb & ~fixed & (np.abs(x - hi) <= PRIMAL_TOL)
            free = nb & ~fixed & ~at_lo & ~at_hi
            if np.any(at_lo & (d < -dtol)) or np.any(at_hi & (d > dtol)) or np.any(free & (np.abs(d) > dtol)):
                return "not_dual_feasible"
            xb = x[self.head]
            lob, hib = lo[self.head], hi[self.head]
            viol = np.maximum(lob - xb, xb - hib)
            r = int(np.argmax(viol))
            if viol[r] <= PRIMAL_TOL:
                self.y, self.d = y, d
                return "optimal"
            below = xb[r] < lob[r]
            s = 1.0 if below else -1.0
            target = lob[r] if below else hib[r]
            rho = self.F.btran(np.eye(1, m, r).ravel())
            alpha_r = self.times_transpose(rho)
            sa = s * alpha_r
            elig = (at_lo & (sa < -PIVOT_TOL)) | (at_hi & (sa > PIVOT_TOL)) | (free & (np.abs(alpha_r) > PIVOT_TOL))
            if not elig.any():
                return "infeasible"
            idx = np.flatnonzero(elig)
            dd = np.where(at_lo[idx], np.maximum(d[idx], 0.0), np.where(at_hi[idx], np.minimum(d[idx], 0.0), 0.0))
            ratio = np.abs(dd) / np.abs(alpha_r[idx])
            # Harris pass: among ratios within tolerance of the minimum pick the largest pivot
            relaxed = (np.abs(dd) + dtol) / np.abs(alpha_r[idx])
            tmax = relaxed.min()
            cand = idx[ratio <= tmax]
            q = int(cand[np.argmax(np.abs(alpha_r[cand]))])
            alpha_q = self.F.ftran(self.column(q))
            if abs(alpha_q[r]) <= PIVOT_TOL:
                raise np.linalg.LinAlgError("tiny dual pivot")
            delta_q = (xb[r] - target) / alpha_q[r]
            x[q] += delta_q
            x[self.head] -= delta_q * alpha_q
            leave = int(self.head[r])
            x[leave] = target
            self.is_basic[leave] = False
            self.is_basic[q] = True
            self.head[r] = q
            self.F.update(r, alpha_q)
            self.iterations += 1
            if self.iterations > limit:
                raise NumericalFailure("dual simplex iteration limit")

    def _guarded(self, cost):
        try:
            return self.run_phase(cost)
        except np.linalg.LinAlgError:
            # lost a nonsingular basis: restart from the current point
            x_now = self.x[: self.n].copy()
            self.crash(x_now)
            self.factor()
            return self.run_phase(cost)


def _solve_bounds_only(inst: MilpInstance) -> LpSolution:
    c, lb, ub = inst.c, inst.lb, inst.ub
    x = np.where(c > 0, lb, np.where(c < 0, ub, np.clip(0.0, lb, ub)))
    if not np.all(np.isfinite(x)):
        j = int(np.argmax(~np.isfinite(x)))
        ray = np.zeros(len(c))
        ray[j] = -np.sign(c[j])
        return LpSolution(Status.UNBOUNDED, ray=ray)
    return LpSolution(Status.OPTIMAL, x=x, duals=np.zeros(0), reduced_costs=c.copy(),
                      objective=float(c @ x + inst.offset))


def simplex_solve(inst: MilpInstance, x0=None, max_iter=None, warm=None) -> LpSolution:
    """Solve the LP relaxation of ``inst`` (integrality ignored).

    ``warm`` is the ``basis`` of an earlier solution of an instance with the
    same rows and columns (only bounds may differ); it is tried first and a
    cold start is used if it cannot be reused.
    """
    if warm is not None and inst.shape[0] > 0:
        sol = _Simplex(inst, max_iter=max_iter).warm(warm)
        if sol is not None:
            return sol
    return _Simplex(inst, max_iter=max_iter).solve(x0)


simplex_solve.warm_start = True
