"""Wavepacket sources under the competing ensemble hypotheses.

* :class:`VanEnkFuchs` -- every packet carries the same fixed phase.
* :class:`RudolphSanders` -- every packet draws its own uniform phase.
* :class:`TwoSource` -- packet 1 and packet 2 come from two fixed-phase sources.
* :class:`CustomPhase` -- phases drawn from a user distribution, shared by
  both packets of a shot or drawn independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from .fock import (
    TWO_PI,
    ModeAssignment,
    PureState,
    SqueezeParams,
    canonical_phase,
    make_squeezed_wavepacket,
    squeezed_coefficients,
)
from .rng import DRAW_PHI1, DRAW_PHI2, ShotStream, counter_uniforms, stream_key


@dataclass(frozen=True)
class VanEnkFuchs:
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phi", canonical_phase(self.phi))


@dataclass(frozen=True)
class RudolphSanders:
    pass


@dataclass(frozen=True)
class TwoSource:
    phi1: float = 0.0
    phi2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phi1", canonical_phase(self.phi1))
        object.__setattr__(self, "phi2", canonical_phase(self.phi2))

    @property
    def phase_difference(self) -> float:
        """``phi2 - phi1`` wrapped to ``(-pi, pi]``."""
        return wrap_pi(self.phi2 - self.phi1)


@dataclass(frozen=True)
class CustomPhase:
    """Phases from ``sampler.ppf(u)`` reduced modulo ``2*pi``.

    ``sampler`` is anything with an inverse CDF, e.g. a frozen
    ``scipy.stats`` distribution.
    """

    sampler: Any
    shared: bool = False
    label: str = "custom"

    def __post_init__(self):
        if not callable(getattr(self.sampler, "ppf", None)):
            raise TypeError("CustomPhase sampler needs a ppf (inverse CDF) method")
        cdf = getattr(self.sampler, "cdf", None)
        if callable(cdf):
            total = float(cdf(np.inf)) - float(cdf(-np.inf))
            if not math.isclose(total, 1.0, abs_tol=1e-9):
                raise ValueError(f"CustomPhase sampler integrates to {total}, not 1")


SourceModel = Union[VanEnkFuchs, RudolphSanders, TwoSource, CustomPhase]


def wrap_pi(x: float) -> float:
    """Wrap an angle to ``(-pi, pi]``."""
    y = math.remainder(float(x), TWO_PI)
    return math.pi if y == -math.pi else y


def phases_from_uniforms(model: SourceModel, u1, u2) -> tuple[np.ndarray, np.ndarray]:
    """Map the two per-shot phase slots to packet phases, vectorized."""
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    if isinstance(model, VanEnkFuchs):
        return np.full(u1.shape, model.phi), np.full(u1.shape, model.phi)
    if isinstance(model, TwoSource):
        return np.full(u1.shape, model.phi1), np.full(u1.shape, model.phi2)
    if isinstance(model, RudolphSanders):
        return TWO_PI * u1, TWO_PI * u2
    if isinstance(model, CustomPhase):
        phi1 = np.mod(np.asarray(model.sampler.ppf(u1), dtype=np.float64), TWO_PI)
        phi2 = phi1.copy() if model.shared else np.mod(np.asarray(model.sampler.ppf(u2), dtype=np.float64), TWO_PI)
        return phi1, phi2
    raise TypeError(f"unknown source model {model!r}")


def draw_phases(model: SourceModel, key: int, shots: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Packet phases for a block of shots of one keyed stream."""
    u1 = counter_uniforms(key, shots, DRAW_PHI1)
    u2 = counter_uniforms(key, shots, DRAW_PHI2)
    return phases_from_uniforms(model, u1, u2)


@dataclass(frozen=True)
class WavepacketPair:
    psi1: PureState
    psi2: PureState
    phi1: float
    phi2: float


def draw_wavepacket_pair(
    model: SourceModel, params: SqueezeParams, cutoff: int, stream: ShotStream
) -> WavepacketPair:
    """Emit the two packets of one shot.

    ``psi1`` occupies ``(ah, bv)`` and ``psi2`` occupies ``(av, bh)``.  The
    phase stored in ``params`` is ignored; the source model decides it.
    """
    phi1, phi2 = phases_from_uniforms(
        model, [stream.uniform(DRAW_PHI1)], [stream.uniform(DRAW_PHI2)]
    )
    phi1, phi2 = float(phi1[0]), float(phi2[0])
    psi1 = make_squeezed_wavepacket(SqueezeParams(params.r, phi1), ModeAssignment.A_H_WITH_B_V, cutoff)
    psi2 = make_squeezed_wavepacket(SqueezeParams(params.r, phi2), ModeAssignment.A_V_WITH_B_H, cutoff)
    return WavepacketPair(psi1, psi2, phi1, phi2)


@dataclass(frozen=True)
class DensitySummary:
    """Monte Carlo average of one packet's density matrix.

    ``coherences[k]`` is the ``<k+1| rho |k>`` element.
    """

    diagonal: np.ndarray
    coherences: np.ndarray
    samples: int

    @property
    def bound(self) -> float:
        return 3.0 / math.sqrt(self.samples)


def ensemble_density_check(
    model: SourceModel, params: SqueezeParams, cutoff: int, samples: int, seed: int = 0
) -> DensitySummary:
    """Average ``|psi1><psi1|`` of the first packet over ``samples`` draws."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    mags = np.abs(squeezed_coefficients(SqueezeParams(params.r), cutoff))
    phi1, _ = draw_phases(model, stream_key(seed, 0xD15C), np.arange(samples))
    k = np.arange(cutoff + 1)
    amps = mags[None, :] * np.exp(1j * np.outer(phi1, k))
    diagonal = np.mean(np.abs(amps) ** 2, axis=0)
    coherences = np.mean(amps[:, 1:] * np.conj(amps[:, :-1]), axis=0)
    return DensitySummary(diagonal, coherences, samples)
