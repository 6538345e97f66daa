"""Deterministic counter-based random numbers (splitmix64).

All randomness used by trajectory simulation flows from one 64-bit root
seed.  Trajectory t draws from the stream seeded by

    mix64(root_seed, t) = finalize(root_seed XOR (t * 0x9E3779B97F4A7C15))

where ``finalize`` is the splitmix64 finalizer, and the stream itself is the
splitmix64 sequence.  Uniforms are the top 53 bits scaled by 2**-53.  The
construction is pure integer arithmetic, so it reproduces bit-exactly on any
platform.
"""

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _finalize(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def mix64(root_seed: int, t: int) -> int:
    """Stream seed for trajectory t."""
    with np.errstate(over="ignore"):
        z = np.uint64(root_seed & 0xFFFFFFFFFFFFFFFF) ^ (np.uint64(t) * GAMMA)
        return int(_finalize(np.uint64([z]))[0])


def uniforms(seed: int, n: int) -> np.ndarray:
    """First n uniforms in [0, 1) of the splitmix64 stream for ``seed``."""
    with np.errstate(over="ignore"):
        k = np.arange(1, n + 1, dtype=np.uint64)
        s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + k * GAMMA
        bits = _finalize(s)
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def trajectory_uniforms(root_seed: int, t: int, n: int) -> np.ndarray:
    return uniforms(mix64(root_seed, t), n)
