"""Writer for the CPLEX LP text format (debug aid for cross-checking solvers)."""

from __future__ import annotations

import io
import re

import numpy as np

from .instance import EQ, GE, LE, MilpInstance

_SENSE = {LE: "<=", GE: ">=", EQ: "="}


def _clean(name) -> str:
    s = re.sub(r"[^A-Za-z0-9_.]", "_", str(name))
    return s if s and not s[0].isdigit() and s[0] != "." else "x" + s


def _terms(coeffs, names) -> str:
    parts = []
    for j, v in coeffs:
        sign = "-" if v < 0 else "+"
        parts.append(f"{sign} {abs(v):.17g} {names[j]}")
    if not parts:
        return "0 " + names[0] if names else "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def write_lp(inst: MilpInstance, stream=None) -> str:
    """Write ``inst`` in LP format to ``stream`` (or return it as a string)."""
    m, n = inst.shape
    raw = inst.names if inst.names else [f"x{j}" for j in range(n)]
    names = []
    seen = set()
    for j, r in enumerate(raw):
        s = _clean(r)
        while s in seen:
            s = f"{s}_{j}"
        seen.add(s)
        names.append(s)
    out = io.StringIO()
    out.write("\\ written by robustmes\nMinimize\n obj: ")
    out.write(_terms([(j, v) for j, v in enumerate(inst.c) if v != 0], names))
    if inst.offset:
        out.write(f" + {inst.offset:.17g}" if inst.offset > 0 else f" - {-inst.offset:.17g}")
    out.write("\nSubject To\n")
    A = inst.A
    for i in range(m):
        row = A.getrow(i)
        coeffs = list(zip(row.indices, row.data))
        out.write(f" r{i}: {_terms(coeffs, names)} {_SENSE[inst.senses[i]]} {inst.rhs[i]:.17g}\n")
    out.write("Bounds\n")
    for j in range(n):
        lo, hi = inst.lb[j], inst.ub[j]
        lo_s = "-inf" if np.isneginf(lo) else f"{lo:.17g}"
        hi_s = "+inf" if np.isposinf(hi) else f"{hi:.17g}"
        if lo == hi:
            out.write(f" {names[j]} = {lo:.17g}\n")
        else:
            out.write(f" {lo_s} <= {names[j]} <= {hi_s}\n")
    bins = [names[j] for j in np.flatnonzero(inst.integrality)]
    if bins:
        out.write("Binaries\n")
        for b in bins:
            out.write(f" {b}\n")
    out.write("End\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text
