"""Monte-Carlo checks of planned trajectories against fresh forecast samples."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .clustering import ClusterIndex
from .prediction import PredictionSet

__all__ = [
    "ViolationReport",
    "CoverageReport",
    "ConfidenceReport",
    "ValidationError",
    "violation_mask",
    "empirical_violation",
    "cluster_noncoverage",
    "binomial_band",
    "certify",
]

CONTAIN_TOL = 1e-9
CHUNK = 20000


class ValidationError(ValueError):
    pass


@dataclass
class ViolationReport:
    violation_fraction: float
    violating: int
    M: int
    witness: tuple[int, int, int] | None = None  # 1-based (sample, t, ov)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["witness"] = None if self.witness is None else list(self.witness)
        return d


@dataclass
class CoverageReport:
    """Per-cluster fraction of fresh samples assigned to the cluster but not covered by it."""

    noncoverage: dict  # (o, k) -> fraction over all M samples
    M: int

    @property
    def total(self) -> float:
        return math.fsum(self.noncoverage.values())

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "total": self.total,
            "clusters": [
                {"ov_id": o + 1, "cluster": k + 1, "noncoverage": v}
                for (o, k), v in sorted(self.noncoverage.items())
            ],
        }


@dataclass
class ConfidenceReport:
    runs: int
    epsilon: float
    beta: float
    fractions: list[float] = field(default_factory=list)
    infeasible_runs: int = 0
    exceed_fraction: float = 0.0
    threshold: float = 0.0
    passed: bool = False
    bound_inequality_holds: bool | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def violation_mask(outputs, fresh: PredictionSet, inflation: float = 0.0, chunk: int = CHUNK):
    """Boolean ``(M, T, O)``: ``y_t`` strictly inside the sampled obstacle."""
    outputs = np.asarray(outputs, dtype=float)
    if outputs.shape[0] != fresh.T:
        raise ValidationError(f"trajectory has {outputs.shape[0]} steps, samples have {fresh.T}")
    if outputs.shape[1] != fresh.ndim:
        raise ValidationError(f"trajectory is {outputs.shape[1]}-D, samples are {fresh.ndim}-D")
    out = np.zeros((fresh.N, fresh.T, fresh.O), dtype=bool)
    for start in range(0, fresh.N, chunk):
        idx = np.arange(start, min(start + chunk, fresh.N))
        for t in range(1, fresh.T + 1):
            for o in range(fresh.O):
                normals, offsets = fresh.obstacle_halfspaces(t, o, inflation, idx)
                lhs = normals @ outputs[t - 1]
                out[idx, t - 1, o] = np.all(lhs < offsets, axis=1)
    return out


def empirical_violation(outputs, fresh: PredictionSet, inflation: float = 0.0) -> ViolationReport:
    """Fraction of fresh samples whose obstacle contains the trajectory at some (t, o).

    ``outputs`` is the ``(T, n_y)`` output trajectory (or a PlanResult).
    """
    outputs = getattr(outputs, "outputs", outputs)
    if outputs is None:
        raise ValidationError("plan has no trajectory")
    if fresh.N < 1:
        raise ValidationError("need at least one fresh sample")
    mask = violation_mask(outputs, fresh, inflation)
    per_sample = mask.any(axis=(1, 2))
    count = int(per_sample.sum())
    witness = None
    if count:
        i = int(np.argmax(per_sample))
        t, o = np.argwhere(mask[i])[0]
        witness = (i + 1, int(t) + 1, int(o) + 1)
    return ViolationReport(count / fresh.N, count, fresh.N, witness)


def cluster_noncoverage(polytopes: dict, index: ClusterIndex, fresh: PredictionSet,
                        inflation: float = 0.0, tol: float = CONTAIN_TOL) -> CoverageReport:
    """Empirical V(C) per cluster: assigned to (o, k) and some obstacle leaves its polytope."""
    assign = index.assign(fresh)
    out = {}
    for o in range(index.O):
        for k in range(len(index.sets[o])):
            members = np.flatnonzero(assign[:, o] == k)
            bad = np.zeros(members.size, dtype=bool)
            if members.size:
                for t in range(1, fresh.T + 1):
                    P = polytopes[(t, o, k)]
                    verts = fresh.obstacle_vertices(t, o, inflation, members)
                    scale = tol * (1.0 + np.abs(P.offsets))
                    sup = np.einsum("nvd,ld->nvl", verts, P.normals)
                    bad |= np.any(sup > P.offsets + scale, axis=(1, 2))
            out[(o, k)] = float(bad.sum()) / fresh.N
    return CoverageReport(out, fresh.N)


def binomial_band(p: float, runs: int, sigmas: float = 3.0) -> float:
    """One-sided acceptance threshold ``p + sigmas * sqrt(p (1 - p) / runs)``."""
    return p + sigmas * math.sqrt(p * (1.0 - p) / runs)


def certify(cfg, runs: int, M: int | None = None, progress=None) -> ConfidenceReport:
    """Repeat the planning pipeline ``runs`` times and check the violation guarantee.

    Each run plans on its own sample substream; all runs are validated on
    one shared fresh set. A run counts as exceeding when its violation is
    above epsilon; the check passes when the exceeding fraction is within a
    three-sigma binomial band of beta. For clusters-method runs the
    union bound ``V(y) <= sum V(C)`` is also checked on the fresh set.
    """
    from . import config as config_mod

    if runs < 1:
        raise ValidationError("runs must be positive")
    risk = cfg.risk
    fresh = config_mod.fresh_samples(cfg, M)
    inflation = cfg["geometry"]["inflation"]
    fractions, exceed, infeasible = [], 0, 0
    holds = True if cfg.method == "clusters" else None
    per_run = []
    for r in range(runs):
        res = config_mod.run_plan(cfg, run=r)
        if not res.feasible:
            infeasible += 1
            per_run.append({"run": r, "status": res.status})
            continue
        rep = empirical_violation(res.outputs, fresh, inflation)
        fractions.append(rep.violation_fraction)
        exceed += rep.violation_fraction > risk.epsilon
        entry = {"run": r, "status": "optimal", "violation": rep.violation_fraction}
        if cfg.method == "clusters":
            cov = cluster_noncoverage(res.polytopes, res.cluster_index, fresh, inflation)
            entry["noncoverage_total"] = cov.total
            if rep.violation_fraction > cov.total + 1e-12:
                holds = False
        per_run.append(entry)
        if progress is not None:
            progress(r, entry)
    feasible = len(fractions)
    exceed_fraction = exceed / feasible if feasible else 0.0
    threshold = binomial_band(risk.beta, runs)
    extra = {"M": fresh.N, "per_run": per_run}
    if cfg.method == "scenario":
        extra["scenario_bound_N"] = config_mod.required_samples(cfg)["N"]
    else:
        extra["samples_per_run"] = config_mod.required_samples(cfg)["N"]
    return ConfidenceReport(
        runs=runs, epsilon=risk.epsilon, beta=risk.beta, fractions=fractions,
        infeasible_runs=infeasible, exceed_fraction=exceed_fraction, threshold=threshold,
        passed=bool(feasible > 0 and exceed_fraction <= threshold and holds is not False),
        bound_inequality_holds=holds, extra=extra,
    )
