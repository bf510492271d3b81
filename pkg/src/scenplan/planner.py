"""Mixed-integer motion planning against sampled or clustered obstacles.

The EV follows linear time-varying dynamics ``x_{t+1} = A_t x_t + B_t u_t``
with outputs ``y_t = C_t x_t``. States and outputs are eliminated in favour
of the inputs (``x = S u + s``), so the decision vector is
``[u, epigraph auxiliaries, binaries]``. Each obstacle row ``a . y >= b``
is relaxed by ``M (1 - z)`` with a per-row ``M`` taken from the interval
hull of reachable outputs.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import clustering as cl
from . import geometry, sampling_bounds
from .milp import LpProblem, MilpProblem, solve_milp
from .prediction import PredictionSet

__all__ = [
    "LtvModel",
    "ObjectiveTerm",
    "ObjectiveSpec",
    "ClusteringConfig",
    "GeometryConfig",
    "AllocationConfig",
    "PlanProblem",
    "PlanResult",
    "PlanningError",
    "double_integrator",
    "direct_output",
    "cluster_polytopes",
    "build_cluster_plan",
    "build_scenario_plan",
    "plan",
    "scenario_bound_query",
    "BIG_M_MARGIN",
]

BIG_M_MARGIN = 1.0
EXTERIOR_TOL = 1e-6


class PlanningError(ValueError):
    pass


@dataclass
class LtvModel:
    """Per-step matrices: ``A[t], B[t]`` for t = 0..T-1 and ``C[t-1]`` for t = 1..T."""

    A: list
    B: list
    C: list
    x0: np.ndarray
    x_lo: np.ndarray | None = None
    x_hi: np.ndarray | None = None
    u_lo: np.ndarray | None = None
    u_hi: np.ndarray | None = None
    y_lo: np.ndarray | None = None
    y_hi: np.ndarray | None = None

    def __post_init__(self):
        self.A = [np.atleast_2d(np.asarray(a, dtype=float)) for a in self.A]
        self.B = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.B]
        self.C = [np.atleast_2d(np.asarray(c, dtype=float)) for c in self.C]
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        T = len(self.A)
        if T < 1 or len(self.B) != T or len(self.C) != T:
            raise PlanningError("A, B and C need one matrix per step")
        nx, nu, ny = self.n_x, self.n_u, self.n_y
        for t in range(T):
            if self.A[t].shape != (nx, nx) or self.B[t].shape != (nx, nu) or self.C[t].shape != (ny, nx):
                raise PlanningError(f"dimension mismatch in the model matrices at step {t}")
        if self.x0.shape != (nx,):
            raise PlanningError(f"x0 must have length {nx}")
        for name, dim in (("x", nx), ("u", nu), ("y", ny)):
            for side, fill in (("lo", -np.inf), ("hi", np.inf)):
                attr = f"{name}_{side}"
                v = getattr(self, attr)
                v = np.full(dim, fill) if v is None else np.asarray(v, dtype=float).reshape(-1)
                if v.shape != (dim,):
                    raise PlanningError(f"{attr} must have length {dim}")
                setattr(self, attr, v)

    @property
    def T(self) -> int:
        return len(self.A)

    @property
    def n_x(self) -> int:
        return self.A[0].shape[0]

    @property
    def n_u(self) -> int:
        return self.B[0].shape[1]

    @property
    def n_y(self) -> int:
        return self.C[0].shape[0]

    def condensed(self):
        """``(Sx, sx, Sy, sy)`` with stacked states ``x_{1..T} = Sx u + sx`` and outputs likewise."""
        T, nx, nu, ny = self.T, self.n_x, self.n_u, self.n_y
        Sx = np.zeros((T * nx, T * nu))
        sx = np.zeros(T * nx)
        prev_S = np.zeros((nx, T * nu))
        prev_s = self.x0
        for t in range(T):
            S = self.A[t] @ prev_S
            S[:, t * nu:(t + 1) * nu] += self.B[t]
            s = self.A[t] @ prev_s
            Sx[t * nx:(t + 1) * nx] = S
            sx[t * nx:(t + 1) * nx] = s
            prev_S, prev_s = S, s
        Cb = np.zeros((T * ny, T * nx))
        for t in range(T):
            Cb[t * ny:(t + 1) * ny, t * nx:(t + 1) * nx] = self.C[t]
        return Sx, sx, Cb @ Sx, Cb @ sx

    def rollout(self, u):
        """States ``(T, n_x)`` and outputs ``(T, n_y)`` for inputs ``(T, n_u)``."""
        u = np.asarray(u, dtype=float).reshape(self.T, self.n_u)
        xs, ys = [], []
        x = self.x0
        for t in range(self.T):
            x = self.A[t] @ x + self.B[t] @ u[t]
            xs.append(x)
            ys.append(self.C[t] @ x)
        return np.array(xs), np.array(ys)


def double_integrator(dt: float, speed_bound: float, accel_bound: float, x0, T: int,
                      position_lo=None, position_hi=None, ndim: int = 2) -> LtvModel:
    """Exact zero-order-hold double integrator; state is ``(position, velocity)``."""
    if not (dt > 0 and speed_bound > 0 and accel_bound > 0):
        raise PlanningError("dt and bounds must be positive")
    I = np.eye(ndim)
    Z = np.zeros((ndim, ndim))
    A = np.block([[I, dt * I], [Z, I]])
    B = np.vstack([0.5 * dt * dt * I, dt * I])
    C = np.hstack([I, Z])
    pos_lo = np.full(ndim, -np.inf) if position_lo is None else np.asarray(position_lo, dtype=float)
    pos_hi = np.full(ndim, np.inf) if position_hi is None else np.asarray(position_hi, dtype=float)
    return LtvModel(
        [A] * T, [B] * T, [C] * T, x0,
        x_lo=np.concatenate([pos_lo, -speed_bound * np.ones(ndim)]),
        x_hi=np.concatenate([pos_hi, speed_bound * np.ones(ndim)]),
        u_lo=-accel_bound * np.ones(ndim), u_hi=accel_bound * np.ones(ndim),
        y_lo=pos_lo, y_hi=pos_hi,
    )


def direct_output(T: int, ndim: int, lo, hi) -> LtvModel:
    """The model ``y_t = u_{t-1}``: the planner picks the outputs directly."""
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (ndim,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (ndim,))
    Z = np.zeros((ndim, ndim))
    I = np.eye(ndim)
    return LtvModel([Z] * T, [I] * T, [I] * T, np.zeros(ndim), u_lo=lo, u_hi=hi, y_lo=lo, y_hi=hi)


@dataclass
class ObjectiveTerm:
    """``weight * v`` (linear) or ``weight * |v - reference|`` (abs).

    ``v`` is coordinate ``index`` of ``var`` in {"x", "u", "y"} at step
    ``t`` (1..T for x and y, 0..T-1 for u); ``t = None`` applies the term at
    every step.
    """

    kind: str
    var: str
    index: int
    weight: float
    t: int | None = None
    reference: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "abs"):
            raise PlanningError(f"objective term kind must be 'linear' or 'abs', got {self.kind!r}")
        if self.var not in ("x", "u", "y"):
            raise PlanningError(f"objective term var must be x, u or y, got {self.var!r}")
        if not math.isfinite(self.weight):
            raise PlanningError("objective weights must be finite")
        if self.kind == "abs" and self.weight < 0:
            raise PlanningError("absolute-value terms need nonnegative weights to stay convex")


@dataclass
class ObjectiveSpec:
    terms: list[ObjectiveTerm] = field(default_factory=list)

    def __post_init__(self):
        self.terms = [t if isinstance(t, ObjectiveTerm) else ObjectiveTerm(**t) for t in self.terms]

    def to_dict(self) -> dict:
        return {"terms": [vars(t).copy() for t in self.terms]}


@dataclass
class ClusteringConfig:
    strategy: str = "kmeans"
    K: list[int] | int | None = None
    seed: int = 0


@dataclass
class GeometryConfig:
    L_C: int = 4
    inflation: float = 0.0
    clearance: float = 0.0


@dataclass
class AllocationConfig:
    """How the risk budget is split over clusters.

    ``mode`` is "uniform" or "weighted"; weighted uses ``weights`` (one list
    per OV) or, when absent, inverse mode probabilities.
    """

    mode: str = "uniform"
    weights: list[list[float]] | None = None
    rule: str = "closed_form"


@dataclass
class PlanProblem(MilpProblem):
    """A MILP plus the bookkeeping needed to read a plan back out of it."""

    model: LtvModel | None = None
    objective_constant: float = 0.0
    n_inputs: int = 0
    n_aux: int = 0
    n_bigm_rows: int = 0
    n_cover_rows: int = 0
    # one entry per obstacle group: (key, row indices, binary variable indices)
    groups: list = field(default_factory=list)

    def without_groups(self, drop) -> "PlanProblem":
        """The same problem with the rows of the listed groups removed and their binaries fixed to 0."""
        drop = set(drop)
        keep = np.ones(self.base.n_rows, dtype=bool)
        lo, hi = self.base.lo.copy(), self.base.hi.copy()
        for key, rows, bins in self.groups:
            if key in drop:
                keep[rows] = False
                lo[bins] = hi[bins] = 0.0
        base = LpProblem(self.base.c, self.base.A[keep], self.base.senses[keep],
                         self.base.rhs[keep], lo, hi)
        return PlanProblem(base, self.binaries, self.model, self.objective_constant,
                           self.n_inputs, self.n_aux, 0, 0,
                           [g for g in self.groups if g[0] not in drop])


class _Builder:
    """Accumulates sparse rows over the layout ``[u, aux, z]``."""

    def __init__(self, model: LtvModel, objective: ObjectiveSpec, n_bin: int):
        self.model = model
        self.Sx, self.sx, self.Sy, self.sy = model.condensed()
        T, nu = model.T, model.n_u
        self.nu_tot = T * nu
        abs_terms = [(term, t) for term in objective.terms if term.kind == "abs"
                     for t in self._steps(term)]
        self.n_aux = len(abs_terms)
        self.n = self.nu_tot + self.n_aux + n_bin
        self.z0 = self.nu_tot + self.n_aux
        self.rows_A = []
        self.senses = []
        self.rhs = []
        self.n_rows = 0
        self.c = np.zeros(self.n)
        self.const = 0.0
        self._objective(objective, abs_terms)
        self._box_rows()

    def _steps(self, term):
        T = self.model.T
        if term.t is None:
            return list(range(T)) if term.var == "u" else list(range(1, T + 1))
        lo, hi = (0, T - 1) if term.var == "u" else (1, T)
        if not lo <= term.t <= hi:
            raise PlanningError(f"objective term step {term.t} outside {lo}..{hi}")
        return [term.t]

    def _affine(self, var, t, index):
        """Coefficients on u and constant of one scalar coordinate."""
        m = self.model
        if var == "u":
            if not 0 <= index < m.n_u:
                raise PlanningError(f"input index {index} out of range")
            row = np.zeros(self.nu_tot)
            row[t * m.n_u + index] = 1.0
            return row, 0.0
        S, s, dim = (self.Sx, self.sx, m.n_x) if var == "x" else (self.Sy, self.sy, m.n_y)
        if not 0 <= index < dim:
            raise PlanningError(f"{var} index {index} out of range")
        r = (t - 1) * dim + index
        return S[r], float(s[r])

    def _objective(self, objective, abs_terms):
        for term in objective.terms:
            if term.kind != "linear":
                continue
            for t in self._steps(term):
                row, c0 = self._affine(term.var, t, term.index)
                self.c[:self.nu_tot] += term.weight * row
                self.const += term.weight * c0
        for a, (term, t) in enumerate(abs_terms):
            row, c0 = self._affine(term.var, t, term.index)
            col = self.nu_tot + a
            self.c[col] = term.weight
            # aux >= +(v - ref) and aux >= -(v - ref)
            self.add_dense(-row, {col: 1.0}, ">=", c0 - term.reference)
            self.add_dense(row, {col: 1.0}, ">=", term.reference - c0)

    def _box_rows(self):
        m = self.model
        for S, s, lo, hi, dim in ((self.Sx, self.sx, m.x_lo, m.x_hi, m.n_x),
                                  (self.Sy, self.sy, m.y_lo, m.y_hi, m.n_y)):
            for t in range(m.T):
                for i in range(dim):
                    r = t * dim + i
                    if not np.any(S[r]):
                        # constant coordinate: only a bound that excludes it matters
                        if not (lo[i] - 1e-9 <= s[r] <= hi[i] + 1e-9):
                            self.add_dense(np.zeros(self.nu_tot), {}, ">=", 1.0)
                        continue
                    if np.isfinite(lo[i]):
                        self.add_dense(S[r], {}, ">=", lo[i] - s[r])
                    if np.isfinite(hi[i]):
                        self.add_dense(S[r], {}, "<=", hi[i] - s[r])

    def add_dense(self, u_row, extra: dict, sense, rhs):
        row = np.zeros(self.n)
        row[:self.nu_tot] = u_row
        for col, v in extra.items():
            row[col] += v
        self.rows_A.append(sp.csr_matrix(row))
        self.senses.append(sense)
        self.rhs.append(rhs)
        self.n_rows += 1
        return self.n_rows - 1

    def add_block(self, A_block, senses, rhs):
        A_block = sp.csr_matrix(A_block)
        self.rows_A.append(A_block)
        self.senses.extend(senses)
        self.rhs.extend(rhs)
        start = self.n_rows
        self.n_rows += A_block.shape[0]
        return np.arange(start, self.n_rows)

    def output_box(self, t):
        """Interval hull of reachable ``y_t`` under the input box, clipped by the output bounds."""
        m = self.model
        rows = self.Sy[(t - 1) * m.n_y:t * m.n_y]
        s = self.sy[(t - 1) * m.n_y:t * m.n_y]
        ulo = np.tile(m.u_lo, m.T)
        uhi = np.tile(m.u_hi, m.T)
        with np.errstate(invalid="ignore"):
            pos, neg = np.maximum(rows, 0), np.minimum(rows, 0)
            lo = s + np.where(pos > 0, pos * ulo, 0).sum(1) + np.where(neg < 0, neg * uhi, 0).sum(1)
            hi = s + np.where(pos > 0, pos * uhi, 0).sum(1) + np.where(neg < 0, neg * ulo, 0).sum(1)
        lo = np.maximum(lo, m.y_lo)
        hi = np.minimum(hi, m.y_hi)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise PlanningError(f"outputs at step {t} are unbounded; big-M needs input or output bounds")
        return lo, hi

    def bigm_rows(self, t, normals, offsets, z_cols):
        """Rows ``a_j . y_t + M_j (1 - z_j) >= b_j`` for stacked normals ``(R, n_y)``."""
        m = self.model
        lo, hi = self.output_box(t)
        min_ay = np.where(normals > 0, normals * lo, normals * hi).sum(1)
        M = np.maximum(offsets - min_ay, 0.0) + BIG_M_MARGIN
        Sy_t = self.Sy[(t - 1) * m.n_y:t * m.n_y]
        sy_t = self.sy[(t - 1) * m.n_y:t * m.n_y]
        R = normals.shape[0]
        U = normals @ Sy_t
        Z = sp.csr_matrix((-M, (np.arange(R), np.asarray(z_cols))), shape=(R, self.n - self.nu_tot))
        block = sp.hstack([sp.csr_matrix(U), Z], format="csr")
        rhs = offsets - normals @ sy_t - M
        return self.add_block(block, [">="] * R, rhs)

    def cover_row(self, z_cols):
        extra = {int(c): 1.0 for c in z_cols}
        return self.add_dense(np.zeros(self.nu_tot), extra, ">=", 1.0)

    def finish(self, binaries, n_bigm, n_cover, groups) -> PlanProblem:
        m = self.model
        A = sp.vstack(self.rows_A, format="csr") if self.rows_A else sp.csr_matrix((0, self.n))
        lo = np.concatenate([np.tile(m.u_lo, m.T), np.zeros(self.n_aux), np.zeros(self.n - self.z0)])
        hi = np.concatenate([np.tile(m.u_hi, m.T), np.full(self.n_aux, np.inf), np.ones(self.n - self.z0)])
        base = LpProblem(self.c, A, np.array(self.senses, dtype=object), np.array(self.rhs), lo, hi)
        return PlanProblem(base, np.asarray(binaries, dtype=np.int64), m, self.const,
                           self.nu_tot, self.n_aux, n_bigm, n_cover, groups)


def build_cluster_plan(model: LtvModel, objective: ObjectiveSpec, polytopes: dict,
                       clearance: float = 0.0) -> PlanProblem:
    """MILP keeping every ``y_t`` outside each cluster polytope.

    ``polytopes`` maps ``(t, o, k)`` (t 1-based) to a :class:`~scenplan.geometry.Polytope`.
    There are ``L_C`` binaries and big-M rows per key plus one covering row.
    """
    keys = sorted(polytopes)
    n_bin = sum(polytopes[k].n_halfspaces for k in keys)
    b = _Builder(model, objective, n_bin)
    groups, binaries = [], []
    n_bigm = 0
    col = b.z0
    for key in keys:
        t = key[0]
        if not 1 <= t <= model.T:
            raise PlanningError(f"polytope step {t} outside 1..{model.T}")
        P = polytopes[key]
        if P.dim != model.n_y:
            raise PlanningError(f"polytope {key} has dimension {P.dim}, outputs have {model.n_y}")
        L = P.n_halfspaces
        zc = np.arange(col, col + L)
        rows = list(b.bigm_rows(t, P.normals, P.offsets + clearance, zc - b.nu_tot))
        rows.append(b.cover_row(zc))
        n_bigm += L
        groups.append((key, np.array(rows), zc))
        binaries.extend(zc)
        col += L
    return b.finish(binaries, n_bigm, len(keys), groups)


def build_scenario_plan(model: LtvModel, objective: ObjectiveSpec, samples: PredictionSet,
                        inflation: float = 0.0, clearance: float = 0.0) -> PlanProblem:
    """MILP keeping every ``y_t`` outside every sampled obstacle with shared binaries.

    Binaries ``z_{j,t,o}`` do not depend on the sample, so each (t, o) has
    ``L`` binaries, ``L * N`` big-M rows and one covering row.
    """
    if samples.T != model.T:
        raise PlanningError(f"samples have horizon {samples.T}, model has {model.T}")
    if samples.ndim != model.n_y:
        raise PlanningError(f"samples are {samples.ndim}-D, outputs are {model.n_y}-D")
    L = samples.n_halfspaces
    n_bin = L * model.T * samples.O
    b = _Builder(model, objective, n_bin)
    groups, binaries = [], []
    n_bigm = 0
    col = b.z0
    for t in range(1, model.T + 1):
        for o in range(samples.O):
            normals, offsets = samples.obstacle_halfspaces(t, o, inflation)
            zc = np.arange(col, col + L)
            # row (i, j) uses binary j
            z_of_row = np.tile(zc - b.nu_tot, samples.N)
            rows = list(b.bigm_rows(t, normals.reshape(-1, model.n_y),
                                    offsets.reshape(-1) + clearance, z_of_row))
            rows.append(b.cover_row(zc))
            n_bigm += L * samples.N
            groups.append(((t, o), np.array(rows), zc))
            binaries.extend(zc)
            col += L
    return b.finish(binaries, n_bigm, model.T * samples.O, groups)


def cluster_polytopes(samples: PredictionSet, index: cl.ClusterIndex, L_C: int = 4,
                      inflation: float = 0.0) -> dict:
    """Tightest fixed-normal polytope around each cluster's sampled obstacles, per step."""
    out = {}
    for o in range(samples.O):
        for k, idx in enumerate(index.sets[o]):
            for t in range(1, samples.T + 1):
                verts = samples.obstacle_vertices(t, o, inflation, idx)
                if samples.ndim == 1:
                    normals = np.array([[1.0], [-1.0]])
                else:
                    mean_yaw = float(geometry.circular_mean(samples.yaw[idx, t - 1, o]))
                    normals = geometry.cluster_normals(mean_yaw, L_C)
                out[(t, o, k)] = geometry.overapproximate(normals, verts)
    return out


@dataclass
class PlanResult:
    method: str
    status: str
    objective: float | None
    inputs: np.ndarray | None
    states: np.ndarray | None
    outputs: np.ndarray | None
    polytopes: dict = field(default_factory=dict)
    cluster_ids: list | None = None
    stats: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    diagnostics: dict | None = None
    # the clustering behind a clusters-method plan; not serialized
    cluster_index: cl.ClusterIndex | None = field(default=None, repr=False)

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        polys = []
        for (t, o, k), P in sorted(self.polytopes.items()):
            cid = self.cluster_ids[o][k] if self.cluster_ids else k + 1
            polys.append({"t": t, "ov_id": o + 1, "cluster_id": int(cid), **P.to_dict()})
        return {
            "method": self.method,
            "status": self.status,
            "objective": self.objective,
            "inputs": arr(self.inputs),
            "states": arr(self.states),
            "outputs": arr(self.outputs),
            "polytopes": polys,
            "stats": self.stats,
            "provenance": self.provenance,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d) -> "PlanResult":
        polys, ids = {}, {}
        for p in d.get("polytopes", []):
            o = p["ov_id"] - 1
            ids.setdefault(o, [])
            if p["cluster_id"] not in ids[o]:
                ids[o].append(p["cluster_id"])
            polys[(p["t"], o, ids[o].index(p["cluster_id"]))] = geometry.Polytope.from_dict(p)
        get = (lambda k: None if d.get(k) is None else np.asarray(d[k], dtype=float))
        return cls(d["method"], d["status"], d.get("objective"), get("inputs"), get("states"),
                   get("outputs"), polys, [ids[o] for o in sorted(ids)] or None,
                   d.get("stats", {}), d.get("provenance", {}), d.get("diagnostics"))

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def save_trajectory_csv(self, path) -> None:
        """Columns t, then positions, velocities and inputs (planar: x, y, vx, vy, ux, uy)."""
        if self.outputs is None:
            raise PlanningError("no trajectory to write")
        ny = self.outputs.shape[1]
        names = ["x", "y"][:ny] if ny <= 2 else [f"y{i}" for i in range(ny)]
        nx = self.states.shape[1]
        vel = [f"v{n}" for n in names] if nx == 2 * ny else [f"s{i}" for i in range(ny, nx)]
        nu = self.inputs.shape[1]
        inp = [f"u{n}" for n in names] if nu == ny else [f"u{i}" for i in range(nu)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + names + vel + inp)
            for t in range(self.outputs.shape[0]):
                state_rest = list(self.states[t, ny:]) if nx > ny else []
                w.writerow([t + 1] + [repr(float(v)) for v in self.outputs[t]]
                           + [repr(float(v)) for v in state_rest]
                           + [repr(float(v)) for v in self.inputs[t]])

    def save_polytope_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "ov_id", "cluster_id", "row", "normal_x", "normal_y", "offset"])
            for (t, o, k), P in sorted(self.polytopes.items()):
                cid = self.cluster_ids[o][k] if self.cluster_ids else k + 1
                for j in range(P.n_halfspaces):
                    nrm = list(P.normals[j]) + [0.0] * (2 - P.dim)
                    w.writerow([t, o + 1, cid, j + 1, repr(float(nrm[0])), repr(float(nrm[1])),
                                repr(float(P.offsets[j]))])


def _extract(prob: PlanProblem, x):
    m = prob.model
    u = x[:prob.n_inputs].reshape(m.T, m.n_u)
    states, outputs = m.rollout(u)
    return u, states, outputs


def _describe_group(key, cluster_ids) -> dict:
    d = {"t": int(key[0]), "ov_id": int(key[1]) + 1}
    if len(key) == 3:
        d["cluster_id"] = int(cluster_ids[key[1]][key[2]]) if cluster_ids else int(key[2]) + 1
    return d


def _blocking_groups(prob: PlanProblem, node_limit: int, max_checks: int = 200,
                     cluster_ids=None) -> dict:
    """Deletion filter over obstacle groups: a minimal set of groups that is infeasible on its own."""
    free = prob.without_groups([g[0] for g in prob.groups])
    if solve_milp(free, node_limit=node_limit).status == "infeasible":
        return {"reason": "dynamics and bounds are infeasible without any obstacle", "blocking": []}
    all_keys = [g[0] for g in prob.groups]
    keep = list(all_keys)
    checks = 0
    i = 0
    while i < len(keep) and checks < max_checks:
        trial = keep[:i] + keep[i + 1:]
        checks += 1
        if solve_milp(prob.without_groups(set(all_keys) - set(trial)), node_limit=node_limit).status == "infeasible":
            keep = trial
        else:
            i += 1
    return {
        "reason": "obstacle constraints leave no feasible trajectory",
        "blocking": [_describe_group(k, cluster_ids) for k in keep],
        "minimal": checks < max_checks,
    }


def scenario_bound_query(model: LtvModel, samples_O: int, L: int, risk) -> sampling_bounds.BoundQuery:
    """Sample-count query for the scenario method: ``n_c = T n_u`` and ``n_b = L T O``."""
    return sampling_bounds.BoundQuery(risk, model.T * model.n_u, L * model.T * samples_O)


def _allocation(risk, index: cl.ClusterIndex, samples: PredictionSet, L_C, T, cfg: AllocationConfig):
    if cfg.mode == "uniform":
        return sampling_bounds.allocate_uniform(risk, index.counts, L_C, T, rule=cfg.rule)
    if cfg.mode != "weighted":
        raise PlanningError(f"unknown allocation mode {cfg.mode!r}")
    if cfg.weights is not None:
        weights = cfg.weights
    else:
        if samples.mode_probs is None or index.strategy != "labels":
            raise PlanningError("inverse-probability weights need labelled samples with mode probabilities")
        weights = sampling_bounds.inverse_probability_weights(
            [[samples.mode_probs[o][cid] for cid in index.cluster_ids[o]] for o in range(samples.O)]
        )
    return sampling_bounds.allocate_weighted(risk, weights, L_C, T, rule=cfg.rule)


def plan(model: LtvModel, objective: ObjectiveSpec, predictions: PredictionSet,
         risk: sampling_bounds.RiskSpec, method: str = "clusters",
         clustering: ClusteringConfig | None = None, geometry_cfg: GeometryConfig | None = None,
         allocation: AllocationConfig | None = None, node_limit: int = 10**6,
         diagnose: bool = True) -> PlanResult:
    """Run the clusters or scenario pipeline end to end and solve the MILP."""
    clustering = clustering or ClusteringConfig()
    geometry_cfg = geometry_cfg or GeometryConfig()
    allocation = allocation or AllocationConfig()
    if predictions.T != model.T:
        raise PlanningError(f"predictions have horizon {predictions.T}, model has {model.T}")
    stats: dict = {}
    prov: dict = {"N": predictions.N, "risk": {"epsilon": risk.epsilon, "beta": risk.beta}}
    polytopes: dict = {}
    cluster_ids = None
    t0 = time.perf_counter()
    if method == "clusters":
        index = cl.cluster_samples(predictions, clustering.strategy, clustering.K, clustering.seed)
        t1 = time.perf_counter()
        L_C = 2 if predictions.ndim == 1 else geometry_cfg.L_C
        polytopes = cluster_polytopes(predictions, index, L_C, geometry_cfg.inflation)
        t2 = time.perf_counter()
        prob = build_cluster_plan(model, objective, polytopes, geometry_cfg.clearance)
        t3 = time.perf_counter()
        alloc = _allocation(risk, index, predictions, L_C, model.T, allocation)
        sizes = {(o, k): len(idx) for o in range(index.O) for k, idx in enumerate(index.sets[o])}
        prov["allocation"] = alloc.to_dict()
        prov["cluster_sizes"] = [[int(sizes[(o, k)]) for k in range(len(index.sets[o]))]
                                 for o in range(index.O)]
        prov["cluster_ids"] = index.cluster_ids
        prov["required_total"] = alloc.required_total()
        # every sample is a scenario for every cluster constraint, so N >= max N_ok suffices
        prov["samples_sufficient"] = bool(predictions.N >= alloc.required_total())
        cluster_ids = index.cluster_ids
        stats.update(cluster_time=t1 - t0, overapprox_time=t2 - t1, build_time=t3 - t2)
    elif method == "scenario":
        t1 = time.perf_counter()
        prob = build_scenario_plan(model, objective, predictions, geometry_cfg.inflation,
                                   geometry_cfg.clearance)
        t3 = time.perf_counter()
        q = scenario_bound_query(model, predictions.O, predictions.n_halfspaces, risk)
        need = sampling_bounds.min_samples(q, rule=allocation.rule)
        prov.update(n_c=q.n_c, n_b=q.n_b, required_total=need,
                    samples_sufficient=bool(predictions.N >= need))
        stats.update(build_time=t3 - t1)
    else:
        raise PlanningError(f"unknown method {method!r}")

    stats.update(n_binaries=prob.n_binaries, n_bigm_rows=prob.n_bigm_rows,
                 n_cover_rows=prob.n_cover_rows, n_rows=prob.base.n_rows, n_vars=prob.base.n_vars)
    sol = solve_milp(prob, node_limit=node_limit)
    stats.update(milp_time=sol.wall_time, nodes=sol.nodes, lp_iterations=sol.lp_iterations)
    if sol.status != "optimal":
        diag = None
        if sol.status == "infeasible" and diagnose:
            diag = _blocking_groups(prob, node_limit, cluster_ids=cluster_ids)
        return PlanResult(method, sol.status, None, None, None, None, polytopes, cluster_ids,
                          stats, prov, diag, index if method == "clusters" else None)
    u, states, outputs = _extract(prob, sol.x)
    obj = float(sol.objective + prob.objective_constant)
    return PlanResult(method, "optimal", obj, u, states, outputs, polytopes, cluster_ids, stats, prov,
                      cluster_index=index if method == "clusters" else None)


def exterior_violations(outputs, polytopes: dict, tol: float = EXTERIOR_TOL) -> list:
    """Keys ``(t, o, k)`` whose polytope contains ``y_t`` in its interior (by more than ``tol``)."""
    bad = []
    for (t, o, k), P in polytopes.items():
        if np.all(P.normals @ outputs[t - 1] < P.offsets - tol):
            bad.append((t, o, k))
    return bad
