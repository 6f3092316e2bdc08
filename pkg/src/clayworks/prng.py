"""Counter-based deterministic random numbers.

Particle jitter and subsampling must reproduce bit-exactly across runs,
platforms and thread counts, so instead of a stateful generator we hash
(seed, counter) pairs with splitmix64 and map the result to [0, 1).
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_u64(*streams: np.ndarray | int) -> np.ndarray:
    """Hash one or more integer streams into uniform uint64 words."""
    with np.errstate(over="ignore"):
        acc = _mix(np.asarray(streams[0], dtype=np.uint64) + _GAMMA)
        for s in streams[1:]:
            acc = _mix(acc ^ (np.asarray(s, dtype=np.uint64) * _GAMMA + _GAMMA))
    return acc


def uniform01(*streams: np.ndarray | int) -> np.ndarray:
    """Deterministic uniforms in [0, 1) keyed by the given counters."""
    # keep the top 53 bits so the float64 mantissa is filled exactly
    return (hash_u64(*streams) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
