"""Forecast sample sets: synthetic multimodal generators and the sample file format.

Sample file (JSON lines)
------------------------
Line 1 is a header object::

    {"format": "scenplan-samples", "version": 1, "N": 2, "T": 2, "O": 1, "ndim": 2}

Every following line is one cell::

    {"sample_id": 1, "ov_id": 1, "t": 1, "x": 0.0, "y": 0.0, "yaw": 0.0,
     "length": 4.0, "width": 2.0, "mode": 1, "mode_prob": 0.5}

``sample_id``, ``ov_id`` and ``t`` are 1-based; every ``(sample_id, ov_id, t)``
cell must appear exactly once. ``mode`` is optional but, when present in any
record, must be present in all; it must be constant over ``t`` for a given
``(sample_id, ov_id)``. ``mode_prob`` is optional and gives the probability of
that mode for that OV. Floats are written with ``repr`` so files round-trip
exactly. With ``ndim = 1`` only ``x`` and ``length`` are used and each
obstacle is the open interval ``x +- length/2``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import geometry, rng

__all__ = [
    "PredictionSet",
    "OvSpec",
    "GeneratorSpec",
    "SampleFileError",
    "generate",
    "load_samples",
    "save_samples",
    "split_fresh",
]

FORMAT_NAME = "scenplan-samples"


class SampleFileError(ValueError):
    pass


@dataclass
class PredictionSet:
    """``N`` sampled trajectories of ``O`` other vehicles over ``T`` steps.

    Arrays are indexed ``[sample, t - 1, ov]``; ``labels`` is ``[sample, ov]``.
    ``mode_probs[o]`` maps a mode label to its probability.
    """

    pos: np.ndarray
    yaw: np.ndarray
    length: np.ndarray
    width: np.ndarray
    labels: np.ndarray | None = None
    mode_probs: list[dict[int, float]] | None = None
    ndim: int = 2

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float)
        N, T, O = self.pos.shape[:3]
        if self.pos.shape != (N, T, O, 2):
            raise ValueError(f"pos must have shape (N, T, O, 2), got {self.pos.shape}")
        self.yaw = np.broadcast_to(np.asarray(self.yaw, dtype=float), (N, T, O)).copy()
        self.length = np.broadcast_to(np.asarray(self.length, dtype=float), (N, T, O)).copy()
        self.width = np.broadcast_to(np.asarray(self.width, dtype=float), (N, T, O)).copy()
        if N < 1:
            raise ValueError("a prediction set needs at least one sample")
        if self.ndim not in (1, 2):
            raise ValueError(f"ndim must be 1 or 2, got {self.ndim}")
        if np.any(self.length <= 0) or (self.ndim == 2 and np.any(self.width <= 0)):
            raise ValueError("obstacle extents must be positive")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(N, O)

    @property
    def N(self) -> int:
        return self.pos.shape[0]

    @property
    def T(self) -> int:
        return self.pos.shape[1]

    @property
    def O(self) -> int:  # noqa: E743
        return self.pos.shape[2]

    @property
    def n_halfspaces(self) -> int:
        return 4 if self.ndim == 2 else 2

    def subset(self, idx) -> "PredictionSet":
        idx = np.asarray(idx)
        return PredictionSet(
            self.pos[idx], self.yaw[idx], self.length[idx], self.width[idx],
            None if self.labels is None else self.labels[idx],
            self.mode_probs, self.ndim,
        )

    def state(self, i: int, t: int, o: int) -> geometry.OvState:
        """OV ``o`` of sample ``i`` at step ``t`` (1-based ``t``)."""
        return geometry.OvState(
            tuple(self.pos[i, t - 1, o]), self.yaw[i, t - 1, o],
            self.length[i, t - 1, o], max(self.width[i, t - 1, o], 1e-12),
        )

    def obstacle_halfspaces(self, t: int, o: int, inflation: float = 0.0, idx=None):
        """Normals ``(n, L, ndim)`` and offsets ``(n, L)`` of the sampled obstacles."""
        sl = slice(None) if idx is None else idx
        if self.ndim == 1:
            x = self.pos[sl, t - 1, o, 0]
            h = self.length[sl, t - 1, o] / 2 + inflation
            normals = np.broadcast_to(np.array([[1.0], [-1.0]]), (x.shape[0], 2, 1))
            return normals, np.stack([x + h, h - x], axis=1)
        return geometry.batch_rectangle_polytopes(
            self.pos[sl, t - 1, o], self.yaw[sl, t - 1, o],
            self.length[sl, t - 1, o], self.width[sl, t - 1, o], inflation,
        )

    def obstacle_vertices(self, t: int, o: int, inflation: float = 0.0, idx=None):
        """Vertices ``(n, V, ndim)`` of the sampled obstacles."""
        sl = slice(None) if idx is None else idx
        if self.ndim == 1:
            x = self.pos[sl, t - 1, o, 0]
            h = self.length[sl, t - 1, o] / 2 + inflation
            return np.stack([x - h, x + h], axis=1)[..., None]
        return geometry.batch_rectangle_vertices(
            self.pos[sl, t - 1, o], self.yaw[sl, t - 1, o],
            self.length[sl, t - 1, o], self.width[sl, t - 1, o], inflation,
        )

    def final_positions(self, o: int) -> np.ndarray:
        p = self.pos[:, -1, o, :]
        return p[:, :1] if self.ndim == 1 else p


@dataclass
class OvSpec:
    """One other vehicle moving straight with a mode-dependent constant acceleration."""

    position: tuple[float, float]
    yaw: float
    speed: float
    length: float
    width: float
    accelerations: list[float]
    probabilities: list[float]
    noise: float = 0.0

    def __post_init__(self):
        self.position = (float(self.position[0]), float(self.position[1]))
        self.accelerations = [float(a) for a in self.accelerations]
        self.probabilities = [float(p) for p in self.probabilities]


@dataclass
class GeneratorSpec:
    kind: str
    seed: int = 0
    T: int = 1
    dt: float = 0.5
    intervals: list[tuple[float, float]] = field(default_factory=lambda: [(-2.0, -1.0), (1.0, 2.0)])
    weights: list[float] = field(default_factory=lambda: [0.5, 0.5])
    half_width: float = 0.1
    ovs: list[OvSpec] = field(default_factory=list)

    KINDS = ("uniform-mixture-1d", "accel-brake-ov")

    def __post_init__(self):
        self.ovs = [o if isinstance(o, OvSpec) else OvSpec(**o) for o in self.ovs]
        self.intervals = [tuple(map(float, iv)) for iv in self.intervals]
        self.validate()

    def validate(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.T < 1:
            raise ValueError("T must be positive")
        if self.kind == "uniform-mixture-1d":
            _check_weights(self.weights, "weights")
            if len(self.weights) != len(self.intervals):
                raise ValueError("one weight per interval is required")
            for lo, hi in self.intervals:
                if not hi > lo:
                    raise ValueError(f"degenerate interval ({lo}, {hi})")
            if not self.half_width > 0:
                raise ValueError("half_width must be positive")
        else:
            if not self.ovs:
                raise ValueError("accel-brake-ov needs at least one OV")
            if not self.dt > 0:
                raise ValueError("dt must be positive")
            for o in self.ovs:
                _check_weights(o.probabilities, "probabilities", allow_zero=True)
                if len(o.accelerations) != len(o.probabilities):
                    raise ValueError("one probability per acceleration level is required")
                if o.noise < 0 or o.length <= 0 or o.width <= 0:
                    raise ValueError("noise must be nonnegative and extents positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["intervals"] = [list(iv) for iv in self.intervals]
        return d

    @classmethod
    def from_dict(cls, d) -> "GeneratorSpec":
        return cls(**d)


def _check_weights(w, name, allow_zero=False):
    w = np.asarray(w, dtype=float)
    if w.size == 0 or np.any(w < 0) or (not allow_zero and np.any(w == 0)):
        raise ValueError(f"{name} must be positive")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must sum to 1, got {w.sum()}")


def _pick(u, probs):
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, u, side="right")


def generate(spec: GeneratorSpec, N: int, stream: int = 0, start: int = 0) -> PredictionSet:
    """Draw samples ``start .. start + N - 1`` of ``stream``.

    Each sample uses its own counter-keyed substream, so the result for a
    given sample index does not depend on ``N`` or on how the range is split.
    """
    if N < 1:
        raise ValueError("N must be positive")
    idx = np.arange(start, start + N)
    T = spec.T
    if spec.kind == "uniform-mixture-1d":
        u = rng.uniforms(spec.seed, stream, idx, 2)
        mode = _pick(u[:, 0], spec.weights)
        iv = np.asarray(spec.intervals)
        x = iv[mode, 0] + u[:, 1] * (iv[mode, 1] - iv[mode, 0])
        pos = np.zeros((N, T, 1, 2))
        pos[..., 0] = x[:, None, None]
        size = 2.0 * spec.half_width
        probs = [{k + 1: float(w) for k, w in enumerate(spec.weights)}]
        return PredictionSet(pos, 0.0, size, size, (mode + 1)[:, None], probs, ndim=1)

    O = len(spec.ovs)
    pos = np.zeros((N, T, O, 2))
    yaw = np.zeros((N, T, O))
    length = np.zeros((N, T, O))
    width = np.zeros((N, T, O))
    labels = np.zeros((N, O), dtype=np.int64)
    tt = spec.dt * np.arange(1, T + 1)
    u = rng.uniforms(spec.seed, stream, idx, O)
    z = rng.standard_normals(spec.seed, stream + (1 << 32), idx, O)
    for o, ov in enumerate(spec.ovs):
        mode = _pick(u[:, o], ov.probabilities)
        acc = np.asarray(ov.accelerations, dtype=float)[mode] + ov.noise * z[:, o]
        s = ov.speed * tt[None, :] + 0.5 * acc[:, None] * tt[None, :] ** 2
        heading = np.array([np.cos(ov.yaw), np.sin(ov.yaw)])
        pos[:, :, o, :] = np.asarray(ov.position, dtype=float) + s[..., None] * heading
        yaw[:, :, o] = geometry.wrap_angle(ov.yaw)
        length[:, :, o] = ov.length
        width[:, :, o] = ov.width
        labels[:, o] = mode + 1
    probs = [{k + 1: float(p) for k, p in enumerate(ov.probabilities)} for ov in spec.ovs]
    return PredictionSet(pos, yaw, length, width, labels, probs, ndim=2)


def split_fresh(source, N_plan: int, N_validate: int, seed: int | None = None):
    """Planning and validation sets drawn from disjoint substreams.

    ``source`` is a GeneratorSpec or a PredictionSet/path; for stored
    samples the first ``N_plan`` samples plan and the next ``N_validate``
    validate.
    """
    if isinstance(source, GeneratorSpec):
        spec = source
        if seed is not None:
            spec = GeneratorSpec(**{**spec.to_dict(), "seed": seed})
        return generate(spec, N_plan, stream=0), generate(spec, N_validate, stream=1)
    ps = load_samples(source) if isinstance(source, (str, Path)) else source
    if ps.N < N_plan + N_validate:
        raise ValueError(f"need {N_plan + N_validate} stored samples, file has {ps.N}")
    return ps.subset(np.arange(N_plan)), ps.subset(np.arange(N_plan, N_plan + N_validate))


def save_samples(path, ps: PredictionSet) -> None:
    path = Path(path)
    header = {"format": FORMAT_NAME, "version": 1, "N": ps.N, "T": ps.T, "O": ps.O, "ndim": ps.ndim}
    with path.open("w") as fh:
        fh.write(json.dumps(header) + "\n")
        for i in range(ps.N):
            for o in range(ps.O):
                for t in range(ps.T):
                    rec = {
                        "sample_id": i + 1,
                        "ov_id": o + 1,
                        "t": t + 1,
                        "x": float(ps.pos[i, t, o, 0]),
                        "y": float(ps.pos[i, t, o, 1]),
                        "yaw": float(ps.yaw[i, t, o]),
                        "length": float(ps.length[i, t, o]),
                        "width": float(ps.width[i, t, o]),
                    }
                    if ps.labels is not None:
                        lab = int(ps.labels[i, o])
                        rec["mode"] = lab
                        if ps.mode_probs is not None and lab in ps.mode_probs[o]:
                            rec["mode_prob"] = ps.mode_probs[o][lab]
                    fh.write(json.dumps(rec) + "\n")


_REQUIRED = ("sample_id", "ov_id", "t", "x", "y", "yaw", "length", "width")


def load_samples(path) -> PredictionSet:
    path = Path(path)
    with path.open() as fh:
        lines = fh.readlines()
    if not lines:
        raise SampleFileError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SampleFileError(f"{path}:1: header is not valid JSON ({exc.msg})") from exc
    if header.get("format") != FORMAT_NAME:
        raise SampleFileError(f"{path}:1: header field 'format' must be {FORMAT_NAME!r}")
    try:
        N, T, O = int(header["N"]), int(header["T"]), int(header["O"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SampleFileError(f"{path}:1: header needs integer fields N, T, O") from exc
    ndim = int(header.get("ndim", 2))
    if N < 1 or T < 1 or O < 1:
        raise SampleFileError(f"{path}:1: N, T and O must be positive")

    vals = np.full((N, T, O, 5), np.nan)
    seen = np.zeros((N, T, O), dtype=bool)
    labels = np.full((N, O, T), -1, dtype=np.int64)
    has_mode = None
    probs: list[dict[int, float]] = [dict() for _ in range(O)]
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SampleFileError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        for key in _REQUIRED:
            if key not in rec:
                raise SampleFileError(f"{path}:{lineno}: missing field {key!r}")
        try:
            i, o, t = int(rec["sample_id"]) - 1, int(rec["ov_id"]) - 1, int(rec["t"]) - 1
            cell = [float(rec[k]) for k in ("x", "y", "yaw", "length", "width")]
        except (TypeError, ValueError) as exc:
            raise SampleFileError(f"{path}:{lineno}: non-numeric field ({exc})") from exc
        if not (0 <= i < N and 0 <= o < O and 0 <= t < T):
            raise SampleFileError(
                f"{path}:{lineno}: cell (sample_id={i + 1}, ov_id={o + 1}, t={t + 1}) out of range"
            )
        if seen[i, t, o]:
            raise SampleFileError(f"{path}:{lineno}: duplicate cell (sample_id={i + 1}, ov_id={o + 1}, t={t + 1})")
        seen[i, t, o] = True
        vals[i, t, o] = cell
        mode_here = "mode" in rec
        if has_mode is None:
            has_mode = mode_here
        elif has_mode != mode_here:
            raise SampleFileError(f"{path}:{lineno}: field 'mode' must be present in all records or none")
        if mode_here:
            lab = int(rec["mode"])
            labels[i, o, t] = lab
            if "mode_prob" in rec:
                p = float(rec["mode_prob"])
                if probs[o].setdefault(lab, p) != p:
                    raise SampleFileError(f"{path}:{lineno}: inconsistent mode_prob for ov {o + 1}, mode {lab}")
    if not seen.all():
        i, t, o = np.argwhere(~seen)[0]
        raise SampleFileError(
            f"{path}: schema violation, missing cell (sample_id={i + 1}, ov_id={o + 1}, t={t + 1})"
        )
    lab_out = None
    if has_mode:
        if np.any(labels != labels[..., :1]):
            i, o = np.argwhere(np.any(labels != labels[..., :1], axis=2))[0]
            raise SampleFileError(f"{path}: mode of (sample_id={i + 1}, ov_id={o + 1}) changes over t")
        lab_out = labels[..., 0]
    mode_probs = [dict(sorted(p.items())) for p in probs] if any(probs) else None
    try:
        return PredictionSet(
            vals[..., :2], vals[..., 2], vals[..., 3], vals[..., 4], lab_out, mode_probs, ndim
        )
    except ValueError as exc:
        raise SampleFileError(f"{path}: {exc}") from exc
