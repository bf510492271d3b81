"""Text dump of a MILP in the common LP file layout, for cross-checking with other solvers.

Grammar (one item per line, ``x<j>`` names variable ``j`` counting from 0)::

    file      := "\\ " comment NL
                 "Minimize" NL " obj: " expr NL
                 "Subject To" NL { " c<i>: " expr sense number NL }
                 "Bounds" NL { " " bound NL }
                 ["Binary" NL { " x<j>" NL }]
                 "End" NL
    expr      := term { (" + " | " - ") term } | "0 x0"
    term      := number " " name
    sense     := " <= " | " >= " | " = "
    bound     := number " <= " name " <= " number
               | name " >= " number | "-inf <= " name " <= " number | name " free"

Numbers use ``repr`` of the float so the dump is exact. Zero coefficients
are omitted.
"""

from __future__ import annotations

import numpy as np

from .bnb import MilpProblem
from .lp import LpProblem

__all__ = ["write_lp", "format_lp"]

_SENSE = {"<=": " <= ", ">=": " >= ", "==": " = "}


def _num(v: float) -> str:
    return repr(float(v))


def _expr(cols, vals) -> str:
    parts = []
    for j, v in zip(cols, vals):
        if v == 0:
            continue
        if not parts:
            parts.append(f"{_num(v)} x{j}")
        elif v < 0:
            parts.append(f" - {_num(-v)} x{j}")
        else:
            parts.append(f" + {_num(v)} x{j}")
    return "".join(parts) if parts else "0 x0"


def format_lp(p, comment: str = "scenplan problem") -> str:
    """The LP-format text of an :class:`LpProblem` or :class:`MilpProblem`."""
    if isinstance(p, MilpProblem):
        base, binaries = p.base, list(p.binaries)
    elif isinstance(p, LpProblem):
        base, binaries = p, []
    else:
        raise TypeError("expected an LpProblem or MilpProblem")
    lines = [f"\\ {comment}", "Minimize"]
    nz = np.flatnonzero(base.c)
    lines.append(" obj: " + _expr(nz, base.c[nz]))
    lines.append("Subject To")
    A = base.A.tocsr()
    for i in range(base.n_rows):
        s, e = A.indptr[i], A.indptr[i + 1]
        lines.append(f" c{i}: {_expr(A.indices[s:e], A.data[s:e])}{_SENSE[base.senses[i]]}{_num(base.rhs[i])}")
    lines.append("Bounds")
    for j in range(base.n_vars):
        lo, hi = base.lo[j], base.hi[j]
        if np.isfinite(lo) and np.isfinite(hi):
            lines.append(f" {_num(lo)} <= x{j} <= {_num(hi)}")
        elif np.isfinite(lo):
            lines.append(f" x{j} >= {_num(lo)}")
        elif np.isfinite(hi):
            lines.append(f" -inf <= x{j} <= {_num(hi)}")
        else:
            lines.append(f" x{j} free")
    if binaries:
        lines.append("Binary")
        lines.extend(f" x{j}" for j in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(p, path, comment: str = "scenplan problem") -> None:
    with open(path, "w") as fh:
        fh.write(format_lp(p, comment))
