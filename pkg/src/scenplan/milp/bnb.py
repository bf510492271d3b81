"""Best-first branch-and-bound over binary variables, plus an enumeration oracle."""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .lp import LpProblem, solve_lp

__all__ = [
    "MilpProblem",
    "MilpSolution",
    "NodeLimitError",
    "solve_milp",
    "brute_force_milp",
    "BRUTE_FORCE_MAX_BINARIES",
]

INT_TOL = 1e-6
PRUNE_TOL = 1e-9
BRUTE_FORCE_MAX_BINARIES = 20


@dataclass
class MilpProblem:
    base: LpProblem
    binaries: np.ndarray

    def __post_init__(self):
        self.binaries = np.unique(np.asarray(self.binaries, dtype=np.int64))
        n = self.base.n_vars
        if self.binaries.size and (self.binaries.min() < 0 or self.binaries.max() >= n):
            raise ValueError("binary index out of range")
        # binaries live in [0, 1] whatever the caller passed
        lo, hi = self.base.lo.copy(), self.base.hi.copy()
        lo[self.binaries] = np.ceil(np.maximum(lo[self.binaries], 0.0) - INT_TOL)
        hi[self.binaries] = np.floor(np.minimum(hi[self.binaries], 1.0) + INT_TOL)
        self.base = self.base.with_bounds(lo, hi)

    @property
    def n_binaries(self) -> int:
        return int(self.binaries.size)


@dataclass
class MilpSolution:
    status: str
    x: np.ndarray | None
    objective: float
    nodes: int = 0
    lp_iterations: int = 0
    wall_time: float = 0.0
    gap: float = 0.0
    incumbent_history: list = field(default_factory=list)

    @property
    def values(self):
        return self.x


class NodeLimitError(RuntimeError):
    def __init__(self, nodes, incumbent, lower_bound):
        self.nodes = nodes
        self.incumbent = incumbent
        self.lower_bound = lower_bound
        self.gap = incumbent.objective - lower_bound if incumbent is not None else float("inf")
        super().__init__(
            f"node budget of {nodes} exhausted; incumbent "
            f"{incumbent.objective if incumbent is not None else None}, gap {self.gap}"
        )


def _polish(p: MilpProblem, z):
    """Fix binaries to ``z`` and re-solve for clean continuous values."""
    lo, hi = p.base.lo.copy(), p.base.hi.copy()
    lo[p.binaries] = z
    hi[p.binaries] = z
    return solve_lp(p.base.with_bounds(lo, hi))


def solve_milp(p: MilpProblem, *, node_limit: int = 10**6, warm_start: bool = False) -> MilpSolution:
    """Solve to global optimality by best-first branch-and-bound.

    Nodes are ordered by the parent's LP bound, deeper nodes first on ties.
    The branching variable is the most fractional binary (lowest index on
    ties). A node is pruned once its bound reaches the incumbent minus 1e-9.
    """
    t0 = time.perf_counter()
    base = p.base
    bins = p.binaries
    lo0, hi0 = base.lo.copy(), base.hi.copy()
    counter = itertools.count()
    # entries: (bound, -depth, seq, fixed_lo, fixed_hi, parent_basis)
    heap = [(-np.inf, 0, next(counter), lo0[bins].copy(), hi0[bins].copy(), None)]
    incumbent: MilpSolution | None = None
    best = np.inf
    history = []
    nodes = 0
    lp_iters = 0
    unbounded = False

    while heap:
        bound, negdepth, _, flo, fhi, warm = heapq.heappop(heap)
        if bound >= best - PRUNE_TOL:
            continue
        if nodes >= node_limit:
            heapq.heappush(heap, (bound, negdepth, next(counter), flo, fhi, warm))
            lower = min(h[0] for h in heap)
            raise NodeLimitError(node_limit, incumbent, lower)
        nodes += 1
        lo, hi = lo0.copy(), hi0.copy()
        lo[bins] = flo
        hi[bins] = fhi
        res = solve_lp(base.with_bounds(lo, hi), basis=warm if warm_start else None)
        lp_iters += res.iterations
        if res.status == "infeasible":
            continue
        if res.status == "unbounded":
            free = np.flatnonzero(flo != fhi)
            if free.size == 0:
                unbounded = True
                break
            j = int(free[0])
            for val in (0.0, 1.0):
                clo, chi = flo.copy(), fhi.copy()
                clo[j] = chi[j] = val
                heapq.heappush(heap, (-np.inf, negdepth - 1, next(counter), clo, chi, None))
            continue
        if res.objective >= best - PRUNE_TOL:
            continue
        zb = res.x[bins]
        frac = np.abs(zb - np.round(zb))
        if frac.size == 0 or frac.max() <= INT_TOL:
            z = np.round(zb)
            pol = _polish(p, z)
            lp_iters += pol.iterations
            if pol.status == "optimal" and pol.objective < best:
                best = pol.objective
                incumbent = MilpSolution("optimal", pol.x, pol.objective)
                history.append((nodes, best))
            continue
        # most fractional; argmax returns the lowest index on ties
        j = int(np.argmax(np.round(frac, 12)))
        children = []
        for val in (0.0, 1.0):
            clo, chi = flo.copy(), fhi.copy()
            clo[j] = chi[j] = val
            children.append((abs(zb[j] - val), val, clo, chi))
        # nearer child gets the smaller sequence number and is explored first
        children.sort(key=lambda ch: (ch[0], ch[1]))
        for _, _, clo, chi in children:
            heapq.heappush(heap, (res.objective, negdepth - 1, next(counter), clo, chi, res.basis))

    wall = time.perf_counter() - t0
    if unbounded:
        return MilpSolution("unbounded", None, -np.inf, nodes, lp_iters, wall, incumbent_history=history)
    if incumbent is None:
        return MilpSolution("infeasible", None, np.nan, nodes, lp_iters, wall, incumbent_history=history)
    incumbent.nodes = nodes
    incumbent.lp_iterations = lp_iters
    incumbent.wall_time = wall
    incumbent.gap = 0.0
    incumbent.incumbent_history = history
    return incumbent


def brute_force_milp(p: MilpProblem) -> MilpSolution:
    """Enumerate every binary assignment and keep the best LP."""
    k = p.n_binaries
    if k > BRUTE_FORCE_MAX_BINARIES:
        raise ValueError(f"brute force supports at most {BRUTE_FORCE_MAX_BINARIES} binaries, got {k}")
    t0 = time.perf_counter()
    best = None
    iters = 0
    count = 0
    for z in itertools.product((0.0, 1.0), repeat=k):
        z = np.array(z)
        lo, hi = p.base.lo.copy(), p.base.hi.copy()
        if np.any(z < lo[p.binaries]) or np.any(z > hi[p.binaries]):
            continue
        lo[p.binaries] = z
        hi[p.binaries] = z
        res = solve_lp(p.base.with_bounds(lo, hi))
        count += 1
        iters += res.iterations
        if res.status == "unbounded":
            return MilpSolution("unbounded", None, -np.inf, count, iters, time.perf_counter() - t0)
        if res.status == "optimal" and (best is None or res.objective < best.objective):
            best = MilpSolution("optimal", res.x, res.objective)
    wall = time.perf_counter() - t0
    if best is None:
        return MilpSolution("infeasible", None, np.nan, count, iters, wall)
    best.nodes, best.lp_iterations, best.wall_time = count, iters, wall
    return best
