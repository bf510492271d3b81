"""Obstacle polytopes, rectangle vertices and cluster overapproximations.

Rectangles are described by center, yaw, length (along the heading) and
width. A polytope is ``{y : normals @ y <= offsets}``; obstacle sets are the
open interior ``normals @ y < offsets``.

Batch helpers work on arrays with a leading sample axis so a whole cluster
is handled in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "OvState",
    "Polytope",
    "wrap_angle",
    "obstacle_polytope",
    "obstacle_vertices",
    "cluster_mean_state",
    "overapproximate",
    "contains",
    "rectangle_normals",
    "cluster_normals",
    "batch_rectangle_vertices",
    "batch_rectangle_polytopes",
    "interval_polytope",
]


class EmptyClusterError(ValueError):
    pass


def wrap_angle(theta):
    """Map angles to (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class OvState:
    position: tuple[float, float]
    yaw: float
    length: float
    width: float

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError(f"length and width must be positive, got {self.length}, {self.width}")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))


@dataclass
class Polytope:
    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        self.normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
        self.offsets = np.asarray(self.offsets, dtype=float).reshape(-1)
        if self.normals.shape[0] != self.offsets.shape[0]:
            raise ValueError("normals and offsets disagree on the number of halfspaces")
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("polytope normals must have unit norm")

    @property
    def n_halfspaces(self) -> int:
        return self.normals.shape[0]

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def to_dict(self) -> dict:
        return {"normals": self.normals.tolist(), "offsets": self.offsets.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Polytope":
        return cls(np.asarray(d["normals"]), np.asarray(d["offsets"]))


def rectangle_normals(yaw: float) -> np.ndarray:
    """Outward edge normals of a rectangle at ``yaw``: front, rear, left, right."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, s], [-c, -s], [-s, c], [s, -c]])


def obstacle_polytope(state: OvState, inflation: float = 0.0) -> Polytope:
    normals = rectangle_normals(state.yaw)
    half = np.array([state.length / 2 + inflation] * 2 + [state.width / 2 + inflation] * 2)
    center = np.asarray(state.position)
    return Polytope(normals, normals @ center + half)


def obstacle_vertices(state: OvState, inflation: float = 0.0) -> np.ndarray:
    """Corners of the (inflated) rectangle, counterclockwise from front-left."""
    a = state.length / 2 + inflation
    b = state.width / 2 + inflation
    local = np.array([[a, b], [-a, b], [-a, -b], [a, -b]])
    c, s = math.cos(state.yaw), math.sin(state.yaw)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.asarray(state.position)


def batch_rectangle_vertices(pos, yaw, length, width, inflation=0.0) -> np.ndarray:
    """Vertices for arrays of rectangles; returns shape ``(..., 4, 2)``."""
    pos = np.asarray(pos, dtype=float)
    a = np.asarray(length, dtype=float) / 2 + inflation
    b = np.asarray(width, dtype=float) / 2 + inflation
    c, s = np.cos(yaw), np.sin(yaw)
    sa = np.array([1.0, -1.0, -1.0, 1.0])
    sb = np.array([1.0, 1.0, -1.0, -1.0])
    lx = a[..., None] * sa
    ly = b[..., None] * sb
    x = pos[..., 0, None] + c[..., None] * lx - s[..., None] * ly
    y = pos[..., 1, None] + s[..., None] * lx + c[..., None] * ly
    return np.stack([x, y], axis=-1)


def batch_rectangle_polytopes(pos, yaw, length, width, inflation=0.0):
    """Halfspace data for arrays of rectangles: normals ``(..., 4, 2)``, offsets ``(..., 4)``."""
    pos = np.asarray(pos, dtype=float)
    c, s = np.cos(yaw), np.sin(yaw)
    normals = np.stack(
        [np.stack([c, s], -1), np.stack([-c, -s], -1), np.stack([-s, c], -1), np.stack([s, -c], -1)],
        axis=-2,
    )
    a = np.asarray(length, dtype=float) / 2 + inflation
    b = np.asarray(width, dtype=float) / 2 + inflation
    half = np.stack([a, a, b, b], axis=-1)
    offsets = np.einsum("...lk,...k->...l", normals, pos) + half
    return normals, offsets


def interval_polytope(center: float, half_width: float) -> Polytope:
    """The 1-D obstacle ``(center - half_width, center + half_width)``."""
    return Polytope(np.array([[1.0], [-1.0]]), np.array([center + half_width, half_width - center]))


def cluster_mean_state(samples) -> OvState:
    """Element-wise mean state; yaw uses the circular mean."""
    samples = list(samples)
    if not samples:
        raise EmptyClusterError("cannot average an empty cluster")
    pos = np.mean([s.position for s in samples], axis=0)
    yaws = np.array([s.yaw for s in samples])
    yaw = math.atan2(np.mean(np.sin(yaws)), np.mean(np.cos(yaws)))
    return OvState(
        (pos[0], pos[1]),
        yaw,
        float(np.mean([s.length for s in samples])),
        float(np.mean([s.width for s in samples])),
    )


def circular_mean(yaws, axis=None):
    yaws = np.asarray(yaws, dtype=float)
    return np.arctan2(np.mean(np.sin(yaws), axis=axis), np.mean(np.cos(yaws), axis=axis))


def cluster_normals(mean_yaw: float, n_halfspaces: int = 4) -> np.ndarray:
    """Fixed normals for a cluster overapproximation.

    Four halfspaces give the rectangle normals at the cluster's mean yaw;
    other counts spread the normals evenly around the circle starting at the
    mean heading.
    """
    if n_halfspaces == 4:
        return rectangle_normals(mean_yaw)
    if n_halfspaces < 3:
        raise ValueError("a bounded planar polytope needs at least 3 halfspaces")
    ang = mean_yaw + 2.0 * np.pi * np.arange(n_halfspaces) / n_halfspaces
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def overapproximate(normals, vertices) -> Polytope:
    """Tightest polytope with the given normals containing every vertex.

    Minimizing the sum of offsets subject to ``normals @ v <= offsets`` for
    all vertices is solved row by row by the maximum support value.
    """
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / norms
    V = np.asarray(vertices, dtype=float).reshape(-1, normals.shape[1])
    if V.shape[0] == 0:
        raise EmptyClusterError("cannot overapproximate an empty vertex set")
    return Polytope(normals, np.max(V @ normals.T, axis=0))


def contains(p: Polytope, y, strict: bool = False) -> bool:
    lhs = p.normals @ np.asarray(y, dtype=float).reshape(-1)
    if strict:
        return bool(np.all(lhs < p.offsets))
    return bool(np.all(lhs <= p.offsets))
