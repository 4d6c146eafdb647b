"""Counter-based random numbers for quenched environments.

Every draw is a pure function of (seed, stream_tag, a, b): the environment can
be evaluated lazily at arbitrary coordinates, in any order, from any worker,
and replays are bit-identical.  The generator is a splitmix64-style absorb/mix
chain; the compiled kernels implement the same chain and must agree exactly
(see tests/test_kernels.py).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


class Stream(IntEnum):
    """Substream tags; distinct tags give statistically independent fields."""

    STRENGTH = 1     # obstacle strengths f(i, j) / f_i
    POSITION = 2     # obstacle centre coordinates
    COUNT = 3        # Poisson counts
    DYNAMICS = 4     # event clocks and site selection
    OPENNESS = 5     # Bernoulli site states
    MSTAT = 6        # M-statistic draws
    HEIGHTS = 7      # auxiliary height / surface draws


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def hash64(seed: int, stream: int, a: int, b: int) -> int:
    """64-bit hash of (seed, stream, a, b); coordinates may be negative."""
    z = seed & _MASK
    for w in (stream, a, b):
        z = (z + _GOLDEN + (w & _MASK)) & _MASK
        z = _mix(z)
    return z


def uniform(seed: int, stream: int, a: int, b: int) -> float:
    """Uniform draw in [0, 1) addressed by (seed, stream, a, b)."""
    return (hash64(seed, stream, a, b) >> 11) * _INV53


def hash64_array(seed: int, stream: int, a, b) -> np.ndarray:
    """Vectorised hash64 over coordinate arrays (broadcast together)."""
    a = np.asarray(a, dtype=np.int64).astype(np.uint64)
    b = np.asarray(b, dtype=np.int64).astype(np.uint64)
    a, b = np.broadcast_arrays(a, b)
    z = np.full(a.shape, seed & _MASK, dtype=np.uint64)
    golden = np.uint64(_GOLDEN)
    mix1 = np.uint64(_MIX1)
    mix2 = np.uint64(_MIX2)
    with np.errstate(over="ignore"):
        for w in (np.full(a.shape, stream & _MASK, dtype=np.uint64), a, b):
            z = z + golden + w
            z = (z ^ (z >> np.uint64(30))) * mix1
            z = (z ^ (z >> np.uint64(27))) * mix2
            z = z ^ (z >> np.uint64(31))
    return z


def uniform_array(seed: int, stream: int, a, b) -> np.ndarray:
    """Vectorised uniforms in [0, 1)."""
    return (hash64_array(seed, stream, a, b) >> np.uint64(11)).astype(np.float64) * _INV53


@dataclass(frozen=True)
class EnvironmentSeed:
    """The sample point of the random environment.

    seed is a 64-bit master key; stream_tag selects an independent substream
    (positions vs strengths vs dynamics).  Identical (seed, stream_tag,
    coordinate) always yields identical draws.
    """

    seed: int
    stream_tag: int = Stream.STRENGTH

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def with_stream(self, stream_tag: int) -> "EnvironmentSeed":
        return replace(self, stream_tag=int(stream_tag))

    def uniform(self, a: int, b: int = 0) -> float:
        return uniform(self.seed, self.stream_tag, a, b)

    def uniform_array(self, a, b=0) -> np.ndarray:
        return uniform_array(self.seed, self.stream_tag, a, b)

    def numpy_generator(self, a: int = 0, b: int = 0) -> np.random.Generator:
        """Philox generator keyed off this stream, for count sampling."""
        return np.random.Generator(np.random.Philox(key=hash64(self.seed, self.stream_tag, a, b)))
