"""Counter-based random numbers keyed by (seed, stream, sample index, draw index).

Every value is a pure function of its key, so any subset of samples can be
regenerated independently and chunked or parallel generation reproduces
sequential generation bit for bit. The mixing function is the SplitMix64
finalizer.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STREAM_SALT = np.uint64(0xD1B54A32D192ED03)
_INV_2_53 = 1.0 / 9007199254740992.0
_MAX_DRAWS = 1 << 16


def _mix64(z: np.ndarray) -> np.ndarray:
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def _key(seed: int, stream: int) -> np.uint64:
    with np.errstate(over="ignore"):
        k = _mix64(np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN], dtype=np.uint64))
        k = _mix64(k ^ (np.uint64(stream & 0xFFFFFFFFFFFFFFFF) * _STREAM_SALT + _GOLDEN))
    return k[0]


def random_bits(seed: int, stream: int, index, n_draws: int) -> np.ndarray:
    """64-bit words of shape ``(len(index), n_draws)``."""
    idx = np.asarray(index, dtype=np.uint64).reshape(-1, 1)
    draws = np.arange(n_draws, dtype=np.uint64).reshape(1, -1)
    key = _key(seed, stream)
    if n_draws > _MAX_DRAWS:
        raise ValueError(f"at most {_MAX_DRAWS} draws per sample")
    # counter = (index, draw) packed without overlap
    ctr = (idx << np.uint64(16)) | draws
    with np.errstate(over="ignore"):
        return _mix64(_mix64(ctr ^ key) + key)


def uniforms(seed: int, stream: int, index, n_draws: int) -> np.ndarray:
    """Uniform variates on [0, 1) with 53 bits of resolution."""
    bits = random_bits(seed, stream, index, n_draws)
    return (bits >> np.uint64(11)).astype(np.float64) * _INV_2_53


def standard_normals(seed: int, stream: int, index, n_draws: int) -> np.ndarray:
    """Standard normal variates by the Box-Muller transform."""
    pairs = (n_draws + 1) // 2
    u = uniforms(seed, stream, index, 2 * pairs)
    u1 = 1.0 - u[:, 0::2]  # (0, 1], keeps log finite
    u2 = u[:, 1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)], axis=1)
    return z[:, :n_draws]
