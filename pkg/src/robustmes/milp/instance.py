"""Matrix-form mixed-integer linear programs and their solutions."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Hashable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<=", "==", ">="
SENSES = (LE, EQ, GE)


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class SolverError(RuntimeError):
    pass


class NumericalFailure(SolverError):
    pass


class ResourceLimit(SolverError):
    """Raised when a node limit is hit; ``incumbent`` holds the best solution found."""

    def __init__(self, message, incumbent=None):
        super().__init__(message)
        self.incumbent = incumbent


@dataclass(frozen=True, eq=False)
class MilpInstance:
    """min c'x + offset  s.t.  A x (sense) rhs,  lb <= x <= ub,  x_j binary where integrality[j].

    ``A`` is stored as a CSR matrix (dense input is converted). Instances are
    treated as immutable; use :meth:`with_bounds` / :meth:`with_rhs` to derive
    modified copies.
    """

    c: np.ndarray
    A: np.ndarray
    senses: tuple
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integrality: np.ndarray
    names: tuple = ()
    row_names: tuple = ()
    offset: float = 0.0

    def __post_init__(self):
        A = self.A
        if not sp.issparse(A):
            A = np.asarray(A, dtype=float)
            if A.ndim == 1:
                A = A.reshape(1, -1)
        if not sp.issparse(A) or A.format != "csr" or A.dtype != float:
            object.__setattr__(self, "A", sp.csr_matrix(A, dtype=float))
        for name in ("c", "rhs", "lb", "ub"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        object.__setattr__(self, "integrality", np.asarray(self.integrality, dtype=bool).reshape(-1))
        object.__setattr__(self, "senses", tuple(self.senses))
        m, n = self.A.shape
        if self.c.shape != (n,):
            raise ValueError(f"objective has {self.c.shape[0]} entries, A has {n} columns")
        if self.rhs.shape != (m,) or len(self.senses) != m:
            raise ValueError("rhs/senses must have one entry per row")
        if self.lb.shape != (n,) or self.ub.shape != (n,) or self.integrality.shape != (n,):
            raise ValueError("bounds and integrality mask must have one entry per column")
        bad = [s for s in self.senses if s not in SENSES]
        if bad:
            raise ValueError(f"unknown row sense {bad[0]!r}")
        if np.any(self.lb > self.ub):
            j = int(np.argmax(self.lb > self.ub))
            raise ValueError(f"lb > ub for column {self._name(j)}")
        ints = self.integrality
        if np.any(np.isnan(self.lb) | np.isnan(self.ub)):
            raise ValueError("NaN bound")
        if np.any(ints & ((self.lb < 0) | (self.ub > 1))):
            raise ValueError("binary columns must have bounds within [0, 1]")
        if self.names and len(self.names) != n:
            raise ValueError("one name per column required")

    @property
    def shape(self):
        return self.A.shape

    @property
    def n_binaries(self) -> int:
        return int(self.integrality.sum())

    def _name(self, j):
        return self.names[j] if self.names else j

    def index(self, name) -> int:
        return self.names.index(name)

    def _cached(self, key, build):
        # derived forms of A, shared with the bound/rhs variants of this instance
        cache = self.__dict__.setdefault("_matrix_cache", {})
        if key not in cache:
            cache[key] = build()
        return cache[key]

    @property
    def A_csc(self):
        return self._cached("csc", self.A.tocsc)

    @property
    def A_T(self):
        """``A`` transposed, in CSR form."""
        return self._cached("T", lambda: self.A_csc.T)

    @property
    def A_dense(self) -> np.ndarray:
        return self._cached("dense", self.A.toarray)

    def _share_matrix(self, other: "MilpInstance") -> "MilpInstance":
        other.__dict__["_matrix_cache"] = self.__dict__.setdefault("_matrix_cache", {})
        return other

    def with_bounds(self, lb=None, ub=None) -> "MilpInstance":
        return self._share_matrix(MilpInstance(
            self.c, self.A, self.senses, self.rhs,
            self.lb if lb is None else np.asarray(lb, dtype=float),
            self.ub if ub is None else np.asarray(ub, dtype=float),
            self.integrality, self.names, self.row_names, self.offset,
        ))

    def with_rhs(self, rhs) -> "MilpInstance":
        return self._share_matrix(MilpInstance(
            self.c, self.A, self.senses, np.asarray(rhs, dtype=float),
            self.lb, self.ub, self.integrality, self.names, self.row_names, self.offset,
        ))

    def relaxed(self) -> "MilpInstance":
        return MilpInstance(
            self.c, self.A, self.senses, self.rhs, self.lb, self.ub,
            np.zeros_like(self.integrality), self.names, self.row_names, self.offset,
        )

    def fix(self, values: Mapping[int, float]) -> "MilpInstance":
        lb, ub = self.lb.copy(), self.ub.copy()
        for j, v in values.items():
            lb[j] = ub[j] = v
        return self.with_bounds(lb, ub)

    def row_activity(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float)

    def max_violation(self, x) -> float:
        """Largest absolute violation of rows and bounds at ``x``."""
        x = np.asarray(x, dtype=float)
        r = self.A @ x - self.rhs
        sense = np.array(self.senses, dtype=object)
        r = np.where(sense == LE, r, np.where(sense == GE, -r, np.abs(r)))
        return float(max(np.max(r, initial=0.0), np.max(self.lb - x, initial=0.0), np.max(x - self.ub, initial=0.0)))


@dataclass
class LpSolution:
    """Result of an LP or MILP solve.

    ``duals`` follow the minimization convention: a binding ``<=`` row has a
    non-positive multiplier, a ``>=`` row a non-negative one.  For MILP
    results, ``bound`` is the best proven lower bound and ``nodes`` the number
    of LP relaxations solved.
    """

    status: Status
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    objective: float = float("nan")
    ray: np.ndarray | None = None
    iterations: int = 0
    bound: float = float("nan")
    nodes: int = 0
    basis: tuple | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def dual_objective(self, inst: MilpInstance) -> float:
        """duals'rhs plus the bound terms carried by the reduced costs."""
        d = self.reduced_costs
        bound = np.where(d > 0, inst.lb, np.where(d < 0, inst.ub, 0.0))
        return float(self.duals @ inst.rhs + d[d != 0] @ bound[d != 0] + inst.offset)


class InstanceBuilder:
    """Incremental construction of a :class:`MilpInstance` from named columns."""

    def __init__(self):
        self._names: list = []
        self._index: dict = {}
        self._lb: list = []
        self._ub: list = []
        self._int: list = []
        self._obj: list = []
        self._rows: list = []
        self._senses: list = []
        self._rhs: list = []
        self._row_names: list = []
        self.offset = 0.0

    @property
    def n_cols(self):
        return len(self._names)

    @property
    def n_rows(self):
        return len(self._rows)

    def __contains__(self, name):
        return name in self._index

    def col(self, name) -> int:
        return self._index[name]

    def add_var(self, name: Hashable, lb=0.0, ub=np.inf, obj=0.0, binary=False) -> int:
        if name in self._index:
            raise ValueError(f"duplicate column name {name!r}")
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        j = len(self._names)
        self._names.append(name)
        self._index[name] = j
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._int.append(bool(binary))
        self._obj.append(float(obj))
        return j

    def set_obj(self, j, value):
        self._obj[j] = float(value)

    def add_obj(self, j, value):
        self._obj[j] += float(value)

    def set_bounds(self, j, lb=None, ub=None):
        if lb is not None:
            self._lb[j] = float(lb)
        if ub is not None:
            self._ub[j] = float(ub)

    def add_row(self, coeffs: Mapping[int, float] | Sequence, sense: str, rhs: float, name=None) -> int:
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        row: dict = {}
        for j, v in items:
            if v != 0.0:
                row[j] = row.get(j, 0.0) + float(v)
        if sense not in SENSES:
            raise ValueError(f"unknown row sense {sense!r}")
        self._rows.append(row)
        self._senses.append(sense)
        self._rhs.append(float(rhs))
        self._row_names.append(name if name is not None else len(self._rows) - 1)
        return len(self._rows) - 1

    def build(self) -> MilpInstance:
        m, n = len(self._rows), len(self._names)
        ri, ci, vals = [], [], []
        for i, row in enumerate(self._rows):
            ri.extend([i] * len(row))
            ci.extend(row.keys())
            vals.extend(row.values())
        A = sp.csr_matrix((vals, (ri, ci)), shape=(m, n), dtype=float)
        return MilpInstance(
            c=np.array(self._obj, dtype=float),
            A=A,
            senses=tuple(self._senses),
            rhs=np.array(self._rhs, dtype=float),
            lb=np.array(self._lb, dtype=float),
            ub=np.array(self._ub, dtype=float),
            integrality=np.array(self._int, dtype=bool),
            names=tuple(self._names),
            row_names=tuple(self._row_names),
            offset=float(self.offset),
        )
