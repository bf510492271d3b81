"""Self-contained LP and binary MILP solvers."""

from .bnb import (
    BRUTE_FORCE_MAX_BINARIES,
    MilpProblem,
    MilpSolution,
    NodeLimitError,
    brute_force_milp,
    solve_milp,
)
from .lp import LpNumericalError, LpProblem, LpResult, solve_lp
from .lpformat import format_lp, write_lp

__all__ = [
    "BRUTE_FORCE_MAX_BINARIES",
    "LpNumericalError",
    "LpProblem",
    "LpResult",
    "MilpProblem",
    "MilpSolution",
    "NodeLimitError",
    "brute_force_milp",
    "format_lp",
    "solve_lp",
    "solve_milp",
    "write_lp",
]
