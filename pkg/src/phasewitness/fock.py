"""Truncated four-mode Fock space.

The four modes are the (spatial, polarization) pairs ``ah, av, bv, bh``.  A
two-mode squeezed wavepacket occupies either the ``(ah, bv)`` pair or the
``(av, bh)`` pair; the joint state of two packets lives on all four.

States are sparse: a mapping from :class:`FockKet4` to complex amplitude,
kept in lexicographic ket order and frozen after construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterator, Mapping, NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi

#: amplitudes below this magnitude are dropped
PRUNE_THRESHOLD = 1e-15
#: maximum discarded norm per wavepacket before truncation is an error
TAIL_TOLERANCE = 1e-9


class FockError(ValueError):
    """Base class for invalid Fock-space operations."""


class TruncationError(FockError):
    """The photon-number cutoff discards more norm than allowed."""


class CompositionError(FockError):
    """Two states cannot be combined (overlapping modes or cutoffs differ)."""


class ImpossibleOutcomeError(FockError):
    """A projective measurement outcome has zero probability."""


def canonical_phase(phi: float) -> float:
    """Reduce an angle to ``[0, 2*pi)``."""
    out = math.fmod(float(phi), TWO_PI)
    if out < 0.0:
        out += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2*pi
    return 0.0 if out >= TWO_PI else out


@dataclass(frozen=True)
class SqueezeParams:
    """Squeezing magnitude ``r`` and phase ``phi`` of a two-mode squeezed vacuum.

    The amplitude ratio between successive photon-number terms is
    ``lam = tanh(r)``.
    """

    r: float
    phi: float = 0.0

    def __post_init__(self):
        r = float(self.r)
        if not math.isfinite(r) or r < 0.0:
            raise ValueError(f"squeezing magnitude must be finite and >= 0, got {self.r!r}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "phi", canonical_phase(self.phi))

    @property
    def lam(self) -> float:
        return math.tanh(self.r)

    @classmethod
    def from_lambda(cls, lam: float, phi: float = 0.0) -> "SqueezeParams":
        if not 0.0 <= lam < 1.0:
            raise ValueError(f"amplitude ratio must lie in [0, 1), got {lam!r}")
        return cls(math.atanh(lam), phi)


class FockKet4(NamedTuple):
    """Occupations of the four modes; tuple order gives the canonical ordering."""

    n_ah: int
    n_av: int
    n_bv: int
    n_bh: int

    @property
    def port_a(self) -> int:
        return self.n_ah + self.n_av

    @property
    def port_b(self) -> int:
        return self.n_bv + self.n_bh


MODE_NAMES = FockKet4._fields


def make_ket(n_ah: int, n_av: int, n_bv: int, n_bh: int, cutoff: int) -> FockKet4:
    """Build a validated ket.

    Each port may hold up to ``2 * cutoff`` photons: one packet contributes
    at most ``cutoff`` per port, and analyzers only move photons between the
    two polarization modes of a port.
    """
    ket = FockKet4(int(n_ah), int(n_av), int(n_bv), int(n_bh))
    _check_ket(ket, max_occupation(cutoff))
    return ket


def _check_ket(ket: FockKet4, bound: int) -> None:
    if min(ket) < 0:
        raise FockError(f"negative occupation in ket {tuple(ket)}")
    if ket.port_a > bound or ket.port_b > bound:
        raise FockError(f"ket {tuple(ket)} exceeds {bound} photons per port")


def max_occupation(cutoff: int) -> int:
    """Largest photon number a port can hold."""
    return 2 * cutoff


class ModeAssignment(enum.Enum):
    """Which mode pair a squeezed wavepacket occupies."""

    A_H_WITH_B_V = "A_H_with_B_V"
    A_V_WITH_B_H = "A_V_with_B_H"

    @property
    def mode_indices(self) -> tuple[int, int]:
        if self is ModeAssignment.A_H_WITH_B_V:
            return (0, 2)
        return (1, 3)


@dataclass(frozen=True)
class PureState:
    """Sparse, immutable amplitude vector over :class:`FockKet4`."""

    amplitudes: Mapping[FockKet4, complex]
    cutoff: int
    _norm2: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.cutoff) < 0:
            raise FockError("cutoff must be >= 0")
        pruned = {
            FockKet4(*k): complex(v)
            for k, v in sorted(self.amplitudes.items())
            if abs(v) >= PRUNE_THRESHOLD
        }
        bound = max_occupation(int(self.cutoff))
        for ket in pruned:
            _check_ket(ket, bound)
        object.__setattr__(self, "cutoff", int(self.cutoff))
        object.__setattr__(self, "amplitudes", MappingProxyType(pruned))
        object.__setattr__(self, "_norm2", math.fsum(abs(v) ** 2 for v in pruned.values()))

    def __iter__(self) -> Iterator[tuple[FockKet4, complex]]:
        return iter(self.amplitudes.items())

    def __len__(self) -> int:
        return len(self.amplitudes)

    def amplitude(self, ket) -> complex:
        return self.amplitudes.get(FockKet4(*ket), 0j)

    def norm(self) -> float:
        return math.sqrt(self._norm2)

    def normalize(self) -> "PureState":
        nrm = self.norm()
        if nrm == 0.0:
            raise FockError("cannot normalize the zero vector")
        return PureState({k: v / nrm for k, v in self.amplitudes.items()}, self.cutoff)

    def occupied_modes(self) -> frozenset[int]:
        return frozenset(i for ket in self.amplitudes for i, n in enumerate(ket) if n)

    def to_records(self) -> list[dict]:
        """Ket/amplitude pairs in canonical order, for JSON serialization."""
        return [
            {"ket": list(ket), "re": amp.real, "im": amp.imag}
            for ket, amp in self.amplitudes.items()
        ]

    @classmethod
    def from_records(cls, records, cutoff: int) -> "PureState":
        return cls({tuple(r["ket"]): complex(r["re"], r["im"]) for r in records}, cutoff)


def vacuum(cutoff: int) -> PureState:
    return PureState({FockKet4(0, 0, 0, 0): 1.0 + 0j}, cutoff)


def tail_norm(lam: float, cutoff: int) -> float:
    """Norm discarded from one wavepacket truncated at ``cutoff`` photons per mode."""
    return lam ** (2 * (cutoff + 1))


def default_cutoff(lam: float, tolerance: float = TAIL_TOLERANCE) -> int:
    """Smallest cutoff (at least 1) whose discarded tail is below ``tolerance``."""
    cutoff = 1
    while tail_norm(lam, cutoff) >= tolerance:
        cutoff += 1
        if cutoff > 10_000:
            raise TruncationError(f"no practical cutoff for lambda={lam}")
    return cutoff


def check_cutoff(lam: float, cutoff: int, tolerance: float = TAIL_TOLERANCE) -> None:
    if cutoff < 1:
        raise TruncationError(f"cutoff must be >= 1, got {cutoff}")
    tail = tail_norm(lam, cutoff)
    if tail >= tolerance:
        raise TruncationError(
            f"cutoff {cutoff} drops norm {tail:.3e} at lambda={lam:.6g}; "
            f"need cutoff >= {default_cutoff(lam, tolerance)}"
        )


def squeezed_coefficients(params: SqueezeParams, cutoff: int) -> np.ndarray:
    """Normalized amplitudes ``c_k`` for ``k = 0..cutoff`` (complex)."""
    check_cutoff(params.lam, cutoff)
    lam = params.lam
    k = np.arange(cutoff + 1)
    mags = math.sqrt(1.0 - lam * lam) * lam**k
    mags /= math.sqrt(1.0 - tail_norm(lam, cutoff))
    return mags * np.exp(1j * k * params.phi)


def make_squeezed_wavepacket(
    params: SqueezeParams, assignment: ModeAssignment, cutoff: int
) -> PureState:
    """Two-mode squeezed vacuum on the mode pair named by ``assignment``.

    Raises
    ------
    TruncationError
        If ``cutoff`` keeps less than ``1 - 1e-9`` of the norm.
    """
    coeffs = squeezed_coefficients(params, cutoff)
    i, j = assignment.mode_indices
    amps = {}
    for k, c in enumerate(coeffs):
        occ = [0, 0, 0, 0]
        occ[i] = occ[j] = k
        amps[FockKet4(*occ)] = complex(c)
    return PureState(amps, cutoff)


def tensor_product(psi1: PureState, psi2: PureState) -> PureState:
    """Joint state of two packets on disjoint mode pairs."""
    if psi1.cutoff != psi2.cutoff:
        raise CompositionError(f"cutoffs differ: {psi1.cutoff} vs {psi2.cutoff}")
    shared = psi1.occupied_modes() & psi2.occupied_modes()
    if shared:
        names = ", ".join(MODE_NAMES[i] for i in sorted(shared))
        raise CompositionError(f"states overlap on modes {names}")
    amps: dict[FockKet4, complex] = {}
    for k1, a1 in psi1:
        for k2, a2 in psi2:
            ket = FockKet4(*(x + y for x, y in zip(k1, k2)))
            amps[ket] = amps.get(ket, 0j) + a1 * a2
    return PureState(amps, psi1.cutoff)


def _sector_weights(state: PureState) -> dict[int, float]:
    weights: dict[int, list[float]] = {}
    for ket, amp in state:
        if ket.port_a == ket.port_b:
            weights.setdefault(ket.port_a, []).append(abs(amp) ** 2)
    return {n: math.fsum(w) for n, w in weights.items()}


def photon_sector_probabilities(state: PureState) -> list[tuple[int, float]]:
    """Probability that both ports hold exactly ``n`` photons, for every ``n``.

    Covers ``n = 0 .. 2*cutoff``; a product of two truncated packets has
    support up to ``2*cutoff`` photons per port.
    """
    norm2 = state.norm() ** 2
    weights = _sector_weights(state)
    return [(n, weights.get(n, 0.0) / norm2) for n in range(max_occupation(state.cutoff) + 1)]


def project_total_photon(state: PureState, n: int) -> tuple[PureState, float]:
    """Project onto ``n`` photons at each port; return the renormalized state and its probability."""
    if n < 0 or n > max_occupation(state.cutoff):
        raise FockError(f"sector {n} outside [0, {max_occupation(state.cutoff)}]")
    norm2 = state.norm() ** 2
    kept = {k: v for k, v in state if k.port_a == n and k.port_b == n}
    prob = _sector_weights(state).get(n, 0.0) / norm2
    if not kept or prob == 0.0:
        raise ImpossibleOutcomeError(f"photon-number sector n={n} has zero probability")
    return PureState(kept, state.cutoff).normalize(), prob


def overlap(psi_a: PureState, psi_b: PureState) -> complex:
    """Inner product ``<psi_a|psi_b>``."""
    if psi_a.cutoff != psi_b.cutoff:
        raise CompositionError("overlap needs equal cutoffs")
    small, large, conj_small = (
        (psi_a, psi_b, True) if len(psi_a) <= len(psi_b) else (psi_b, psi_a, False)
    )
    terms = []
    for ket, amp in small:
        other = large.amplitudes.get(ket)
        if other is None:
            continue
        terms.append(amp.conjugate() * other if conj_small else other.conjugate() * amp)
    return complex(math.fsum(t.real for t in terms), math.fsum(t.imag for t in terms))
