"""Counter-based random streams.

Every uniform is a pure function of ``(seed, stream, shot, draw)``, hashed
through the SplitMix64 finalizer.  Shots can therefore run in any order or in
parallel and still reproduce the same numbers.  Three implementations share
one definition: scalar Python ints (reference path), vectorized numpy, and a
numba kernel helper; the test-suite pins them to each other.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import options

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_DRAW_STEP = 0xD1B54A32D192ED03
_INV_2_53 = 2.0**-53

# fixed draw slots within one shot
DRAW_SECTOR = 0
DRAW_PHI1 = 1
DRAW_PHI2 = 2
DRAW_OUTCOME = 3


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def float_bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x) + 0.0))[0]


def stream_key(seed: int, *salts: int) -> int:
    """Fold a seed and any number of integer salts into one 64-bit key."""
    key = mix64(int(seed) & MASK64)
    for salt in salts:
        key = mix64(key ^ mix64((int(salt) + _GOLDEN) & MASK64))
    return key


def angle_stream_key(seed: int, beta: float, delta: float) -> int:
    """Key for the shots taken at one analyzer setting."""
    return stream_key(seed, float_bits(beta), float_bits(delta))


def counter_uniform(key: int, shot: int, draw: int) -> float:
    """Uniform in ``[0, 1)`` for one (shot, draw) slot of a keyed stream."""
    z = mix64(key + int(shot) * _GOLDEN)
    z = mix64(z + (int(draw) + 1) * _DRAW_STEP)
    return (z >> 11) * _INV_2_53


def counter_uniforms(key: int, shots: np.ndarray, draw: int) -> np.ndarray:
    """Vectorized :func:`counter_uniform` over an array of shot indices."""
    shots = np.asarray(shots, dtype=np.uint64)
    u64 = np.uint64
    with np.errstate(over="ignore"):
        z = _mix64_np(u64(key) + shots * u64(_GOLDEN))
        z = _mix64_np(z + u64(((int(draw) + 1) * _DRAW_STEP) & MASK64))
    return (z >> u64(11)).astype(np.float64) * _INV_2_53


def _mix64_np(z: np.ndarray) -> np.ndarray:
    u64 = np.uint64
    z = (z ^ (z >> u64(30))) * u64(_M1)
    z = (z ^ (z >> u64(27))) * u64(_M2)
    return z ^ (z >> u64(31))


@dataclass(frozen=True)
class ShotStream:
    """The random slots available to one shot."""

    key: int
    shot: int

    def uniform(self, draw: int) -> float:
        return counter_uniform(self.key, self.shot, draw)


if options.USE_NUMBA:
    from numba import njit

    _NB_GOLDEN = np.uint64(_GOLDEN)
    _NB_M1 = np.uint64(_M1)
    _NB_M2 = np.uint64(_M2)
    _NB_DRAW_STEP = np.uint64(_DRAW_STEP)
    _NB_S30 = np.uint64(30)
    _NB_S27 = np.uint64(27)
    _NB_S31 = np.uint64(31)
    _NB_S11 = np.uint64(11)
    _NB_ONE = np.uint64(1)

    @njit(cache=True, inline="always")
    def _mix64_nb(z):
        z = (z ^ (z >> _NB_S30)) * _NB_M1
        z = (z ^ (z >> _NB_S27)) * _NB_M2
        return z ^ (z >> _NB_S31)

    @njit(cache=True)
    def counter_uniform_nb(key, shot, draw):
        z = _mix64_nb(key + np.uint64(shot) * _NB_GOLDEN)
        z = _mix64_nb(z + (np.uint64(draw) + _NB_ONE) * _NB_DRAW_STEP)
        return np.float64(z >> _NB_S11) * _INV_2_53

else:  # pragma: no cover
    counter_uniform_nb = None
