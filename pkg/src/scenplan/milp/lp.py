"""Linear programs and a revised dual simplex solver.

Every constraint, including variable bounds, is brought to the row form
``a_r . x >= beta_r``. A basis is a set of ``n`` rows whose matrix is
nonsingular; the vertex solves ``B x = beta_B`` and the multipliers solve
``B^T lam = c``. The method keeps ``lam >= 0`` (dual feasibility) and pivots
the most violated row into the basis, which is the primal revised simplex
applied to the dual program. Its basis is ``n x n`` regardless of the
number of rows, so problems with tens of thousands of rows and a few
hundred variables stay cheap.

Infinite bounds are replaced by an artificial box of half-width ``big_box``;
an optimum that leans on the artificial box is reported as unbounded.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = ["LpProblem", "LpResult", "solve_lp", "LpNumericalError", "SENSES"]

SENSES = ("<=", ">=", "==")

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
MAX_ITER = 10**6
REFACTOR_EVERY = 64


class LpNumericalError(RuntimeError):
    pass


@dataclass
class LpProblem:
    """``min c.x`` subject to ``A x (senses) rhs`` and ``lo <= x <= hi``."""

    c: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.shape[0]
        self.A = sp.csr_matrix(self.A, dtype=float)
        if self.A.shape[0] == 0:
            self.A = sp.csr_matrix((0, n))
        if self.A.shape[1] != n:
            raise ValueError(f"constraint matrix has {self.A.shape[1]} columns, objective has {n}")
        self.senses = np.asarray(self.senses, dtype=object).reshape(-1)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        if not (len(self.senses) == len(self.rhs) == self.A.shape[0]):
            raise ValueError("senses, rhs and rows must have equal length")
        bad = [s for s in self.senses if s not in SENSES]
        if bad:
            raise ValueError(f"unknown constraint sense {bad[0]!r}")
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (n,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (n,)).copy()

    @classmethod
    def from_rows(cls, objective, rows=(), bounds=None, names=None):
        """Build from a list of ``(coefficients, sense, rhs)`` triples."""
        c = np.asarray(objective, dtype=float)
        n = c.shape[0]
        if rows:
            A = np.array([np.asarray(r[0], dtype=float) for r in rows]).reshape(len(rows), n)
        else:
            A = np.zeros((0, n))
        senses = [r[1] for r in rows]
        rhs = [r[2] for r in rows]
        if bounds is None:
            lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
        else:
            lo = np.array([b[0] for b in bounds], dtype=float)
            hi = np.array([b[1] for b in bounds], dtype=float)
        return cls(c, sp.csr_matrix(A), senses, rhs, lo, hi, names)

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def with_bounds(self, lo, hi) -> "LpProblem":
        q = LpProblem(self.c, self.A, self.senses, self.rhs, lo, hi, self.names)
        q._rows_cache = self._general_rows()
        return q

    def _general_rows(self):
        cache = getattr(self, "_rows_cache", None)
        if cache is None:
            cache = self._rows_cache = _GeneralRows(self)
        return cache

    def max_violation(self, x) -> float:
        """Largest absolute constraint or bound violation at ``x``."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if self.n_rows:
            ax = self.A @ x
            ge = self.senses == ">="
            le = self.senses == "<="
            eq = self.senses == "=="
            if ge.any():
                worst = max(worst, float(np.max(self.rhs[ge] - ax[ge], initial=0.0)))
            if le.any():
                worst = max(worst, float(np.max(ax[le] - self.rhs[le], initial=0.0)))
            if eq.any():
                worst = max(worst, float(np.max(np.abs(ax[eq] - self.rhs[eq]), initial=0.0)))
        worst = max(worst, float(np.max(self.lo - x, initial=0.0)))
        worst = max(worst, float(np.max(x - self.hi, initial=0.0)))
        return worst


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int
    dual_objective: float = float("nan")
    row_duals: np.ndarray | None = None
    basis: np.ndarray | None = None
    wall_time: float = 0.0
    info: dict = field(default_factory=dict)


class _GeneralRows:
    """The constraint rows of an LpProblem rewritten as ``G x >= h``."""

    def __init__(self, p: "LpProblem"):
        n = p.n_vars
        A = p.A
        blocks, rhs, origin, sign = [], [], [], []
        idx = np.arange(p.n_rows)
        ge = p.senses == ">="
        le = p.senses == "<="
        eq = p.senses == "=="
        for mask, s in ((ge, 1.0), (le, -1.0), (eq, 1.0), (eq, -1.0)):
            if mask.any():
                blocks.append(A[mask] if s > 0 else -A[mask])
                rhs.append(s * p.rhs[mask])
                origin.append(idx[mask])
                sign.append(np.full(mask.sum(), s))
        if blocks:
            self.G = sp.vstack(blocks, format="csr")
            self.h = np.concatenate(rhs)
            self.origin = np.concatenate(origin)
            self.sign = np.concatenate(sign)
        else:
            self.G = sp.csr_matrix((0, n))
            self.h = np.zeros(0)
            self.origin = np.zeros(0, dtype=int)
            self.sign = np.zeros(0)
        self.absG = abs(self.G)
        self.norm = np.maximum(np.sqrt(np.asarray(self.G.multiply(self.G).sum(axis=1)).ravel()), 1e-300)
        self.dense = self.G.toarray() if self.G.shape[0] * n <= 4096 else None


class _RowForm:
    """General rows plus one row per variable bound: ``a.x >= beta``."""

    def __init__(self, p: LpProblem, big_box: float):
        gen = p._general_rows()
        n = p.n_vars
        self.gen = gen
        self.G = gen.G
        self.h = gen.h
        self.origin = gen.origin
        self.sign = gen.sign
        self.mg = gen.G.shape[0]
        self.n = n
        self.art_lo = ~np.isfinite(p.lo)
        self.art_hi = ~np.isfinite(p.hi)
        self.L = np.where(self.art_lo, -big_box, p.lo)
        self.U = np.where(self.art_hi, big_box, p.hi)
        self.beta = np.concatenate([self.h, self.L, -self.U])
        self.tol = FEAS_TOL * (1.0 + np.abs(self.beta))
        self.norm = np.concatenate([gen.norm, np.ones(2 * n)])
        self.artificial = np.concatenate(
            [np.zeros(self.mg, dtype=bool), self.art_lo, self.art_hi]
        )

    def slacks(self, x):
        Gx = self.gen.dense @ x if self.gen.dense is not None else self.G @ x
        return np.concatenate([Gx - self.h, x - self.L, self.U - x])

    def tolerance(self, x):
        ax = np.abs(x)
        gx = np.abs(self.gen.dense) @ ax if self.gen.dense is not None else self.gen.absG @ ax
        return self.tol + FEAS_TOL * np.concatenate([gx, ax, ax])

    def row(self, r):
        n = self.n
        if r < self.mg:
            if self.gen.dense is not None:
                return self.gen.dense[r].copy()
            return self.G.getrow(r).toarray().ravel()
        v = np.zeros(n)
        if r < self.mg + n:
            v[r - self.mg] = 1.0
        else:
            v[r - self.mg - n] = -1.0
        return v

    def matrix(self, rows):
        return np.vstack([self.row(r) for r in rows])


def _initial_basis(rf: _RowForm, c):
    n = rf.n
    basis = np.empty(n, dtype=np.int64)
    lam = np.abs(c).astype(float)
    for j in range(n):
        if c[j] > 0:
            basis[j] = rf.mg + j
        elif c[j] < 0:
            basis[j] = rf.mg + n + j
        else:
            # prefer a real bound so zero-cost variables do not sit on the artificial box
            basis[j] = rf.mg + n + j if (rf.art_lo[j] and not rf.art_hi[j]) else rf.mg + j
    return basis, lam


def solve_lp(p: LpProblem, *, big_box: float = 1e7, max_iter: int = MAX_ITER,
             basis=None) -> LpResult:
    """Solve an LP; returns status ``optimal``, ``infeasible`` or ``unbounded``.

    ``basis`` may carry the row basis of a previous solve of a problem with
    the same rows and objective (only bounds changed); it stays dual
    feasible, so the solve resumes from it.
    """
    t0 = time.perf_counter()
    n = p.n_vars
    c = p.c
    if np.any(p.lo > p.hi + FEAS_TOL * (1 + np.abs(p.lo))):
        return LpResult("infeasible", None, float("nan"), 0, wall_time=time.perf_counter() - t0)
    if n == 0:
        viol = p.max_violation(np.zeros(0))
        status = "optimal" if viol <= FEAS_TOL else "infeasible"
        return LpResult(status, np.zeros(0) if status == "optimal" else None,
                        0.0 if status == "optimal" else float("nan"), 0,
                        dual_objective=0.0, wall_time=time.perf_counter() - t0)

    rf = _RowForm(p, big_box)
    if basis is not None:
        basis = np.asarray(basis, dtype=np.int64).copy()
        Bmat = rf.matrix(basis)
        try:
            Binv = np.linalg.inv(Bmat)
            lam = Binv.T @ c
        except np.linalg.LinAlgError:
            basis = None
        else:
            if np.any(lam < -OPT_TOL * (1 + np.abs(c).max())):
                basis = None
    if basis is None:
        basis, lam = _initial_basis(rf, c)
        Binv = np.diag([1.0 if r < rf.mg + n else -1.0 for r in basis])
    lam = np.maximum(lam, 0.0)

    bland = False
    degenerate = 0
    it = 0
    since_refactor = 0
    while True:
        x = Binv @ rf.beta[basis]
        s = rf.slacks(x)
        viol = s < -rf.tolerance(x)
        viol[basis] = False
        if not viol.any():
            break
        if it >= max_iter:
            raise LpNumericalError(f"no convergence after {max_iter} iterations")
        it += 1
        if bland:
            r = int(np.flatnonzero(viol)[0])
        else:
            scaled = np.where(viol, s / rf.norm, 0.0)
            r = int(np.argmin(scaled))
        a_r = rf.row(r)
        w = Binv.T @ a_r
        cand = np.flatnonzero(w > PIVOT_TOL)
        if cand.size == 0:
            return LpResult("infeasible", None, float("nan"), it,
                            wall_time=time.perf_counter() - t0,
                            info={"certificate_row": r})
        ratios = lam[cand] / w[cand]
        theta = ratios.min()
        ties = cand[ratios <= theta + 1e-12 * (1.0 + theta)]
        if bland:
            p_pos = int(ties[np.argmin(basis[ties])])
        else:
            p_pos = int(ties[np.argmax(w[ties])])
        theta = lam[p_pos] / w[p_pos]
        if theta <= 1e-12:
            degenerate += 1
            if degenerate > 10 * n:
                bland = True
        else:
            degenerate = 0
        lam = np.maximum(lam - theta * w, 0.0)
        lam[p_pos] = theta
        wp = w[p_pos]
        col = Binv[:, p_pos].copy()
        Binv -= np.outer(col, w) / wp
        Binv[:, p_pos] = col / wp
        basis[p_pos] = r
        since_refactor += 1
        if since_refactor >= REFACTOR_EVERY:
            since_refactor = 0
            Bmat = rf.matrix(basis)
            try:
                Binv = np.linalg.inv(Bmat)
            except np.linalg.LinAlgError as exc:
                raise LpNumericalError("singular basis during refactorization") from exc
            lam = np.maximum(Binv.T @ c, 0.0)

    if np.any(rf.artificial[basis] & (lam > OPT_TOL * (1.0 + np.abs(c).max()))):
        return LpResult("unbounded", None, -np.inf, it, wall_time=time.perf_counter() - t0,
                        basis=basis)
    # snap to the real bound when a variable sits on a bound within tolerance
    x = np.clip(x, rf.L, rf.U)
    obj = float(c @ x)
    dual_obj = float(lam @ rf.beta[basis])
    row_duals = np.zeros(p.n_rows)
    gen = basis < rf.mg
    if gen.any():
        np.add.at(row_duals, rf.origin[basis[gen]], rf.sign[basis[gen]] * lam[gen])
    return LpResult("optimal", x, obj, it, dual_objective=dual_obj, row_duals=row_duals,
                    basis=basis, wall_time=time.perf_counter() - t0)
