"""Polarization analyzers, detector models and exact outcome distributions.

Each port carries an H and a V mode.  The analyzer at angle ``beta`` with
retardance ``delta`` maps the creation operators as::

    H -> cos(beta) H' + e^{i delta} sin(beta) V'
    V -> -e^{-i delta} sin(beta) H' + cos(beta) V'

``H'`` is the pass axis.  After an analyzer the state's ``ah``/``bh`` slots
hold the pass-mode occupations and ``av``/``bv`` the orthogonal ones.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from .fock import FockKet4, PureState
from .rng import DRAW_OUTCOME

PI = math.pi


def canonical_beta(beta: float) -> float:
    out = math.fmod(float(beta), PI)
    if out < 0.0:
        out += PI
    return 0.0 if out >= PI else out


@dataclass(frozen=True)
class AnalyzerSetting:
    beta: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "beta", canonical_beta(self.beta))
        d = math.fmod(float(self.delta), 2 * PI)
        if d < 0.0:
            d += 2 * PI
        object.__setattr__(self, "delta", 0.0 if d >= 2 * PI else d)


class Topology(enum.Enum):
    ABSORBING_POLARIZER = "AbsorbingPolarizer"
    POLARIZING_BEAM_SPLITTER = "PolarizingBeamSplitter"


class Resolving(enum.Enum):
    PHOTON_NUMBER_RESOLVING = "PhotonNumberResolving"
    THRESHOLD = "Threshold"


@dataclass(frozen=True)
class DetectorModel:
    topology: Topology = Topology.ABSORBING_POLARIZER
    resolving: Resolving = Resolving.PHOTON_NUMBER_RESOLVING

    def respond(self, n: int) -> int:
        if self.resolving is Resolving.THRESHOLD:
            return min(n, 1)
        return n


@dataclass(frozen=True, order=True)
class PortOutcome:
    """Detected counts at ports A and B.

    ``reflect_a``/``reflect_b`` are only populated for the beam-splitter
    topology, where the orthogonal output is counted too.
    """

    count_a: int
    count_b: int
    reflect_a: int | None = None
    reflect_b: int | None = None

    @property
    def counts(self) -> tuple[int, int]:
        return (self.count_a, self.count_b)


@lru_cache(maxsize=4096)
def _transfer_cached(n: int, beta: float, delta: float) -> np.ndarray:
    c, s = math.cos(beta), math.sin(beta)
    ph = complex(math.cos(delta), math.sin(delta))
    u_hh, u_hv = c, ph * s
    u_vh, u_vv = -ph.conjugate() * s, c
    t = np.zeros((n + 1, n + 1), dtype=np.complex128)
    for n_h in range(n + 1):
        n_v = n - n_h
        norm_in = math.sqrt(math.factorial(n_h) * math.factorial(n_v))
        for j in range(n_h + 1):
            a = math.comb(n_h, j) * u_hh**j * u_hv ** (n_h - j)
            for k in range(n_v + 1):
                b = math.comb(n_v, k) * u_vh**k * u_vv ** (n_v - k)
                p = j + k
                t[n_h, p] += a * b * math.sqrt(math.factorial(p) * math.factorial(n - p)) / norm_in
    t.setflags(write=False)
    return t


def port_transfer_matrix(n: int, setting: AnalyzerSetting) -> np.ndarray:
    """Analyzer action on the ``n``-photon block of one port.

    Entry ``[n_h, p]`` is the amplitude to find ``p`` photons in the pass mode
    (and ``n - p`` in the orthogonal mode) given ``n_h`` H and ``n - n_h`` V
    photons at the input.
    """
    return _transfer_cached(int(n), setting.beta, setting.delta)


def transfer_stack(max_n: int, setting: AnalyzerSetting) -> np.ndarray:
    """All blocks ``0..max_n`` packed into one zero-padded ``(N, N, N)`` array."""
    out = np.zeros((max_n + 1, max_n + 1, max_n + 1), dtype=np.complex128)
    for n in range(max_n + 1):
        out[n, : n + 1, : n + 1] = port_transfer_matrix(n, setting)
    return out


# (H slot, V slot) of each port within FockKet4
_PORT_SLOTS = {"A": (0, 1), "B": (3, 2)}


def apply_analyzer(state: PureState, port: str, setting: AnalyzerSetting) -> PureState:
    """Rotate the polarization basis of one spatial mode."""
    try:
        h_slot, v_slot = _PORT_SLOTS[port.upper()]
    except KeyError:
        raise ValueError(f"port must be 'A' or 'B', got {port!r}") from None
    out: dict[FockKet4, complex] = {}
    for ket, amp in state:
        n_h, n_v = ket[h_slot], ket[v_slot]
        n = n_h + n_v
        row = port_transfer_matrix(n, setting)[n_h]
        occ = list(ket)
        for p in range(n + 1):
            t = row[p]
            if t == 0:
                continue
            occ[h_slot], occ[v_slot] = p, n - p
            key = FockKet4(*occ)
            out[key] = out.get(key, 0j) + amp * t
    return PureState(out, state.cutoff)


def apply_analyzers(
    state: PureState, setting_a: AnalyzerSetting, setting_b: AnalyzerSetting
) -> PureState:
    return apply_analyzer(apply_analyzer(state, "A", setting_a), "B", setting_b)


def resolved_distribution(
    state: PureState, setting_a: AnalyzerSetting, setting_b: AnalyzerSetting
) -> dict[tuple[int, int, int, int], float]:
    """Ideal photon-number-resolved probabilities after both analyzers.

    Keys are ``(pass_a, pass_b, orth_a, orth_b)`` in ascending order, which is
    also the order :func:`sample_counts` walks when inverting a uniform.
    """
    rotated = apply_analyzers(state, setting_a, setting_b)
    norm2 = rotated.norm() ** 2
    acc: dict[tuple[int, int, int, int], list[float]] = {}
    for ket, amp in rotated:
        key = (ket.n_ah, ket.n_bh, ket.n_av, ket.n_bv)
        acc.setdefault(key, []).append(abs(amp) ** 2)
    return {k: math.fsum(v) / norm2 for k, v in sorted(acc.items())}


def detect(model: DetectorModel, pass_a: int, pass_b: int, orth_a: int, orth_b: int) -> PortOutcome:
    """Map ideal mode occupations to what the detectors report."""
    if model.topology is Topology.POLARIZING_BEAM_SPLITTER:
        return PortOutcome(
            model.respond(pass_a), model.respond(pass_b), model.respond(orth_a), model.respond(orth_b)
        )
    return PortOutcome(model.respond(pass_a), model.respond(pass_b))


def exact_outcome_distribution(
    state: PureState,
    model: DetectorModel,
    settings: tuple[AnalyzerSetting, AnalyzerSetting] | Mapping[str, AnalyzerSetting],
) -> dict[PortOutcome, float]:
    """Exact probability of every detector outcome."""
    setting_a, setting_b = _unpack(settings)
    dist: dict[PortOutcome, list[float]] = {}
    for key, p in resolved_distribution(state, setting_a, setting_b).items():
        dist.setdefault(detect(model, *key), []).append(p)
    return {k: math.fsum(v) for k, v in sorted(dist.items(), key=lambda kv: _sort_key(kv[0]))}


def sample_counts(state: PureState, model: DetectorModel, settings, stream) -> PortOutcome:
    """Draw one outcome using the stream's outcome slot."""
    setting_a, setting_b = _unpack(settings)
    u = stream.uniform(DRAW_OUTCOME)
    return sample_resolved(resolved_distribution(state, setting_a, setting_b), model, u)


def sample_resolved(dist: Mapping[tuple[int, int, int, int], float], model: DetectorModel, u: float) -> PortOutcome:
    keys = list(dist)
    cum = 0.0
    for key in keys:
        cum += dist[key]
        if u < cum:
            return detect(model, *key)
    return detect(model, *keys[-1])


def _unpack(settings) -> tuple[AnalyzerSetting, AnalyzerSetting]:
    if isinstance(settings, Mapping):
        return settings["A"], settings["B"]
    a, b = settings
    return a, b


def _sort_key(outcome: PortOutcome):
    return (outcome.count_a, outcome.count_b, outcome.reflect_a or 0, outcome.reflect_b or 0)
