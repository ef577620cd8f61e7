"""Counter-based random streams for kernels.

Training and pool-building kernels need random draws that do not depend on
which worker processes which vertex, so results are reproducible for any
worker count. Stateful generators cannot give that; instead every draw is a
pure function of a key built from (seed, stream, step, vertex, counter) via
splitmix64-style mixing. Statistical quality is far beyond what negative
sampling needs.
"""

import numpy as np
from numba import njit, uint64, float64

U64_GOLDEN = uint64(0x9E3779B97F4A7C15)
U64_MIX1 = uint64(0xBF58476D1CE4E5B9)
U64_MIX2 = uint64(0x94D049BB133111EB)


@njit(uint64(uint64), cache=True, inline="always")
def mix64(z):
    z = (z + U64_GOLDEN) & uint64(0xFFFFFFFFFFFFFFFF)
    z = (z ^ (z >> uint64(30))) * U64_MIX1
    z = (z ^ (z >> uint64(27))) * U64_MIX2
    return z ^ (z >> uint64(31))


@njit(uint64(uint64, uint64, uint64, uint64), cache=True, inline="always")
def stream_key(seed, stream, step, vertex):
    """Collapse the four key components into one 64-bit stream id."""
    h = mix64(seed ^ (stream * U64_GOLDEN))
    h = mix64(h ^ step)
    return mix64(h ^ vertex)


@njit(uint64(uint64, uint64), cache=True, inline="always")
def draw_u64(key, counter):
    return mix64(key ^ (counter * U64_MIX1))


@njit(float64(uint64, uint64), cache=True, inline="always")
def draw_unit(key, counter):
    """Uniform float64 in [0, 1) from the top 53 bits."""
    return float64(draw_u64(key, counter) >> uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def draw_below(key, counter, n):
    """Uniform integer in [0, n); n must be positive."""
    return np.int64(draw_unit(key, counter) * n)
