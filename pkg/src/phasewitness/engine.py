"""Shot pipeline and analyzer sweeps.

One shot: emit a packet pair, form the joint state, optionally filter on a
QND photon-number outcome, rotate both analyzers, count photons, and classify
the outcome as a good event or not.  Port A's analyzer is a pure rotation;
the configured retardance sits in port B's analyzer, which is what makes the
relative packet phase visible (an identical unitary on both ports cannot
shift it).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import stats

from . import kernels
from .fock import (
    SqueezeParams,
    check_cutoff,
    default_cutoff,
    max_occupation,
    photon_sector_probabilities,
    project_total_photon,
    squeezed_coefficients,
    tensor_product,
    ModeAssignment,
    make_squeezed_wavepacket,
)
from .optics import (
    AnalyzerSetting,
    DetectorModel,
    PortOutcome,
    Resolving,
    Topology,
    resolved_distribution,
    sample_resolved,
    transfer_stack,
)
from .rng import DRAW_OUTCOME, DRAW_SECTOR, ShotStream, angle_stream_key
from .sources import SourceModel, draw_phases, draw_wavepacket_pair

BLOCK_SHOTS = 1 << 18


class GoodClass(str, enum.Enum):
    COINCIDENCE_11 = "Coincidence11"
    SINGLE_10 = "Single10"
    SINGLE_01 = "Single01"
    NOT_GOOD = "NotGood"

    @property
    def code(self) -> int:
        return _CLASS_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "GoodClass":
        return _CLASSES[int(code)]


_CLASSES = (GoodClass.NOT_GOOD, GoodClass.COINCIDENCE_11, GoodClass.SINGLE_10, GoodClass.SINGLE_01)
_CLASS_CODES = {c: i for i, c in enumerate(_CLASSES)}
CODE_NOT_GOOD, CODE_11, CODE_10, CODE_01 = range(4)


@dataclass(frozen=True)
class Destructive:
    pass


@dataclass(frozen=True)
class QND:
    n: int = 1

    def __post_init__(self):
        if int(self.n) < 0:
            raise ValueError("QND sector must be >= 0")
        object.__setattr__(self, "n", int(self.n))


Pipeline = Union[Destructive, QND]


@dataclass(frozen=True)
class ExperimentConfig:
    params: SqueezeParams
    model: SourceModel
    detector: DetectorModel = DetectorModel()
    betas: tuple[float, ...] = (0.0, math.pi / 4)
    delta: float = 0.0
    shots_per_beta: int = 1000
    pipeline: Pipeline = Destructive()
    seed: int = 0
    cutoff: int | None = None

    def __post_init__(self):
        betas = tuple(float(b) for b in self.betas)
        if not betas:
            raise ValueError("betas must be non-empty")
        for b in betas:
            if not (0.0 <= b < math.pi):
                raise ValueError(f"beta {b!r} outside [0, pi)")
        if int(self.shots_per_beta) < 0:
            raise ValueError("shots_per_beta must be >= 0")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "shots_per_beta", int(self.shots_per_beta))
        object.__setattr__(self, "seed", int(self.seed))
        cutoff = default_cutoff(self.params.lam) if self.cutoff is None else int(self.cutoff)
        check_cutoff(self.params.lam, cutoff)
        object.__setattr__(self, "cutoff", cutoff)

    @property
    def qnd_n(self) -> int:
        return self.pipeline.n if isinstance(self.pipeline, QND) else -1

    def settings(self, beta: float) -> tuple[AnalyzerSetting, AnalyzerSetting]:
        return AnalyzerSetting(beta, 0.0), AnalyzerSetting(beta, self.delta)

    def stream_key(self, beta: float) -> int:
        return angle_stream_key(self.seed, beta, self.delta)


@dataclass(frozen=True)
class DetectionEvent:
    shot_index: int
    beta: float
    delta: float
    outcome: PortOutcome | None
    good: bool
    good_class: GoodClass
    phases: tuple[float, float]
    sector: int = -1

    @property
    def discarded(self) -> bool:
        return self.outcome is None


def classify_good(outcome: PortOutcome | tuple[int, int] | None) -> GoodClass:
    """Good event: some port counts exactly one and no port counts more than one."""
    if outcome is None:
        return GoodClass.NOT_GOOD
    a, b = outcome.counts if isinstance(outcome, PortOutcome) else outcome
    return GoodClass.from_code(int(classify_counts(np.array([a]), np.array([b]))[0]))


def classify_counts(count_a: np.ndarray, count_b: np.ndarray) -> np.ndarray:
    a = np.asarray(count_a)
    b = np.asarray(count_b)
    codes = np.full(a.shape, CODE_NOT_GOOD, dtype=np.int8)
    codes[(a == 1) & (b == 1)] = CODE_11
    codes[(a == 1) & (b == 0)] = CODE_10
    codes[(a == 0) & (b == 1)] = CODE_01
    return codes


@lru_cache(maxsize=256)
def _sector_table(r: float, cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-packet magnitudes and the cumulative port-photon-number table."""
    params = SqueezeParams(r)
    coeffs = np.abs(squeezed_coefficients(params, cutoff))
    joint = tensor_product(
        make_squeezed_wavepacket(params, ModeAssignment.A_H_WITH_B_V, cutoff),
        make_squeezed_wavepacket(params, ModeAssignment.A_V_WITH_B_H, cutoff),
    )
    cdf = np.cumsum([p for _, p in photon_sector_probabilities(joint)])
    cdf[-1] = 1.0
    coeffs.setflags(write=False)
    cdf.setflags(write=False)
    return coeffs, cdf


def sector_cdf(params: SqueezeParams, cutoff: int) -> np.ndarray:
    return _sector_table(params.r, cutoff)[1]


def _draw_sector(cdf: np.ndarray, u: float) -> int:
    return int(min(np.searchsorted(cdf, u, side="right"), cdf.shape[0] - 1))


def run_shot(config: ExperimentConfig, beta: float, shot_index: int) -> DetectionEvent:
    """One shot through the reference (sparse-state) path."""
    stream = ShotStream(config.stream_key(beta), int(shot_index))
    pair = draw_wavepacket_pair(config.model, config.params, config.cutoff, stream)
    joint = tensor_product(pair.psi1, pair.psi2)
    n = _draw_sector(sector_cdf(config.params, config.cutoff), stream.uniform(DRAW_SECTOR))
    phases = (pair.phi1, pair.phi2)
    if config.qnd_n >= 0 and n != config.qnd_n:
        return DetectionEvent(shot_index, beta, config.delta, None, False, GoodClass.NOT_GOOD, phases, n)
    projected, _ = project_total_photon(joint, n)
    setting_a, setting_b = config.settings(beta)
    dist = resolved_distribution(projected, setting_a, setting_b)
    outcome = sample_resolved(dist, config.detector, stream.uniform(DRAW_OUTCOME))
    cls = classify_good(outcome)
    return DetectionEvent(
        shot_index, beta, config.delta, outcome, cls is not GoodClass.NOT_GOOD, cls, phases, n
    )


@dataclass
class EventLog:
    """Column store of detection events, ordered as produced."""

    shot_index: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    count_a: np.ndarray
    count_b: np.ndarray
    good_class: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    reflect_a: np.ndarray | None = None
    reflect_b: np.ndarray | None = None
    sector: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.shot_index)
        for name in ("reflect_a", "reflect_b", "sector"):
            if getattr(self, name) is None:
                setattr(self, name, np.full(n, -1, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.shot_index)

    @property
    def good(self) -> np.ndarray:
        return self.good_class != CODE_NOT_GOOD

    def event(self, i: int) -> DetectionEvent:
        a, b = int(self.count_a[i]), int(self.count_b[i])
        if a < 0:
            outcome = None
        elif self.reflect_a[i] >= 0:
            outcome = PortOutcome(a, b, int(self.reflect_a[i]), int(self.reflect_b[i]))
        else:
            outcome = PortOutcome(a, b)
        cls = GoodClass.from_code(self.good_class[i])
        return DetectionEvent(
            int(self.shot_index[i]),
            float(self.beta[i]),
            float(self.delta[i]),
            outcome,
            cls is not GoodClass.NOT_GOOD,
            cls,
            (float(self.phi1[i]), float(self.phi2[i])),
            int(self.sector[i]),
        )

    def __iter__(self):
        return (self.event(i) for i in range(len(self)))

    def select(self, mask) -> "EventLog":
        return EventLog(**{name: getattr(self, name)[mask] for name in _COLUMNS})

    @classmethod
    def concat(cls, logs: Sequence["EventLog"]) -> "EventLog":
        if not logs:
            return cls.empty()
        return cls(**{name: np.concatenate([getattr(g, name) for g in logs]) for name in _COLUMNS})

    @classmethod
    def empty(cls) -> "EventLog":
        i = np.zeros(0, dtype=np.int64)
        f = np.zeros(0, dtype=np.float64)
        return cls(i, f, f, i, i, np.zeros(0, dtype=np.int8), f, f, i, i, i)


_COLUMNS = (
    "shot_index", "beta", "delta", "count_a", "count_b", "good_class",
    "phi1", "phi2", "reflect_a", "reflect_b", "sector",
)


def simulate_shots(config: ExperimentConfig, beta: float, start: int, count: int) -> EventLog:
    """Shots ``start .. start+count-1`` at one analyzer angle via the fast kernels."""
    key = config.stream_key(beta)
    shots = np.arange(start, start + count, dtype=np.int64)
    phi1, phi2 = draw_phases(config.model, key, shots)
    coeffs, cdf = _sector_table(config.params.r, config.cutoff)
    max_n = max_occupation(config.cutoff)
    setting_a, setting_b = config.settings(beta)
    pass_a, pass_b, sector = kernels.simulate_block(
        key, shots, phi1, phi2, cdf, coeffs,
        transfer_stack(max_n, setting_a), transfer_stack(max_n, setting_b), config.qnd_n,
    )
    return _detect_columns(config, beta, shots, phi1, phi2, pass_a, pass_b, sector)


def _detect_columns(config, beta, shots, phi1, phi2, pass_a, pass_b, sector) -> EventLog:
    discarded = pass_a < 0
    threshold = config.detector.resolving is Resolving.THRESHOLD
    count_a = np.minimum(pass_a, 1) if threshold else pass_a.copy()
    count_b = np.minimum(pass_b, 1) if threshold else pass_b.copy()
    if config.detector.topology is Topology.POLARIZING_BEAM_SPLITTER:
        reflect_a = sector - pass_a
        reflect_b = sector - pass_b
        if threshold:
            reflect_a = np.minimum(reflect_a, 1)
            reflect_b = np.minimum(reflect_b, 1)
        reflect_a[discarded] = -1
        reflect_b[discarded] = -1
    else:
        reflect_a = np.full(shots.shape, -1, dtype=np.int64)
        reflect_b = np.full(shots.shape, -1, dtype=np.int64)
    count_a[discarded] = -1
    count_b[discarded] = -1
    n = shots.shape[0]
    return EventLog(
        shot_index=shots,
        beta=np.full(n, float(beta)),
        delta=np.full(n, config.delta),
        count_a=count_a,
        count_b=count_b,
        good_class=classify_counts(count_a, count_b),
        phi1=phi1,
        phi2=phi2,
        reflect_a=reflect_a,
        reflect_b=reflect_b,
        sector=sector,
    )


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval at ``z`` standard deviations; ``(0, 1)`` when ``n == 0``."""
    if n <= 0:
        return 0.0, 1.0
    level = 1.0 - 2.0 * stats.norm.sf(z)
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class CorrelationSummary:
    beta: float
    delta: float
    n_total: int
    n_good: int
    n_coincidence: int
    n_single_10: int
    n_single_01: int
    n_zero: int
    n_discarded: int
    conditional_coincidence: float
    wilson_low: float
    wilson_high: float

    @property
    def n_single(self) -> int:
        return self.n_single_10 + self.n_single_01

    @property
    def unconditional_coincidence(self) -> float:
        return self.n_coincidence / self.n_total if self.n_total else math.nan

    def to_dict(self) -> dict:
        cc = self.conditional_coincidence
        return {
            "beta_rad": self.beta,
            "delta_rad": self.delta,
            "n_total": self.n_total,
            "n_good": self.n_good,
            "n_coincidence": self.n_coincidence,
            "n_single": self.n_single,
            "n_single_10": self.n_single_10,
            "n_single_01": self.n_single_01,
            "n_zero_zero": self.n_zero,
            "n_discarded": self.n_discarded,
            "conditional_coincidence": None if math.isnan(cc) else cc,
            "unconditional_coincidence": None if not self.n_total else self.unconditional_coincidence,
            "wilson_low": self.wilson_low,
            "wilson_high": self.wilson_high,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorrelationSummary":
        cc = d["conditional_coincidence"]
        return cls(
            d["beta_rad"], d["delta_rad"], d["n_total"], d["n_good"], d["n_coincidence"],
            d["n_single_10"], d["n_single_01"], d["n_zero_zero"], d["n_discarded"],
            math.nan if cc is None else cc, d["wilson_low"], d["wilson_high"],
        )


def summarize_counts(beta, delta, codes: np.ndarray, count_a: np.ndarray, count_b: np.ndarray) -> CorrelationSummary:
    tally = np.bincount(codes.astype(np.int64), minlength=4)
    n_11, n_10, n_01 = int(tally[CODE_11]), int(tally[CODE_10]), int(tally[CODE_01])
    n_good = n_11 + n_10 + n_01
    lo, hi = wilson_interval(n_11, n_good)
    return CorrelationSummary(
        beta=float(beta),
        delta=float(delta),
        n_total=int(codes.shape[0]),
        n_good=n_good,
        n_coincidence=n_11,
        n_single_10=n_10,
        n_single_01=n_01,
        n_zero=int(np.count_nonzero((count_a == 0) & (count_b == 0))),
        n_discarded=int(np.count_nonzero(count_a < 0)),
        conditional_coincidence=n_11 / n_good if n_good else math.nan,
        wilson_low=lo,
        wilson_high=hi,
    )


def summarize(log: EventLog) -> list[CorrelationSummary]:
    """One summary per distinct (beta, delta), in order of first appearance."""
    if len(log) == 0:
        return []
    pairs = np.stack([log.beta, log.delta], axis=1)
    _, first, inverse = np.unique(pairs, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    out = []
    for g in np.argsort(first):
        mask = inverse == g
        i0 = first[g]
        out.append(summarize_counts(log.beta[i0], log.delta[i0], log.good_class[mask], log.count_a[mask], log.count_b[mask]))
    return out


@dataclass
class SweepResult:
    summaries: list[CorrelationSummary]
    log: EventLog

    def at(self, beta: float) -> CorrelationSummary:
        for s in self.summaries:
            if math.isclose(s.beta, beta, abs_tol=1e-12):
                return s
        raise KeyError(beta)


def run_sweep(config: ExperimentConfig, keep_log: bool = True) -> SweepResult:
    """Run ``shots_per_beta`` shots at every analyzer angle.

    With ``keep_log=False`` only the summaries are kept, which bounds memory
    for very long runs.
    """
    logs = []
    summaries = []
    for beta in config.betas:
        tallies = []
        for start in range(0, config.shots_per_beta, BLOCK_SHOTS):
            block = simulate_shots(config, beta, start, min(BLOCK_SHOTS, config.shots_per_beta - start))
            if keep_log:
                logs.append(block)
            tallies.append((block.good_class, block.count_a, block.count_b))
        if tallies:
            codes, a, b = (np.concatenate(c) for c in zip(*tallies))
        else:
            codes = np.zeros(0, dtype=np.int8)
            a = b = np.zeros(0, dtype=np.int64)
        summaries.append(summarize_counts(beta, config.delta, codes, a, b))
    return SweepResult(summaries, EventLog.concat(logs) if keep_log else EventLog.empty())


def collect_good_events(config: ExperimentConfig, beta: float, n_good: int, block: int = 1 << 14,
                        max_shots: int = 10**9) -> EventLog:
    """Shots from index 0 until exactly ``n_good`` good events have occurred."""
    logs = []
    found = 0
    start = 0
    while found < n_good:
        if start >= max_shots:
            raise RuntimeError(f"only {found} good events after {start} shots")
        chunk = simulate_shots(config, beta, start, block)
        good = np.flatnonzero(chunk.good_class != CODE_NOT_GOOD)
        need = n_good - found
        if good.size >= need:
            logs.append(chunk.select(slice(0, good[need - 1] + 1)))
            found = n_good
        else:
            logs.append(chunk)
            found += good.size
        start += block
        block = min(block * 2, BLOCK_SHOTS)
    return EventLog.concat(logs)


@dataclass
class EquivalenceReport:
    betas: list[float]
    n_good_destructive: list[int]
    n_good_qnd: list[int]
    z_scores: list[dict[str, float]]
    inconclusive: bool
    sigma: float = 5.0

    @property
    def max_abs_z(self) -> float:
        vals = [abs(z) for d in self.z_scores for z in d.values()]
        return max(vals) if vals else 0.0

    @property
    def passed(self) -> bool:
        return not self.inconclusive and self.max_abs_z <= self.sigma

    def to_dict(self) -> dict:
        return {
            "betas_rad": self.betas,
            "n_good_destructive": self.n_good_destructive,
            "n_good_qnd": self.n_good_qnd,
            "z_scores": self.z_scores,
            "max_abs_z": self.max_abs_z,
            "inconclusive": self.inconclusive,
            "passed": self.passed,
        }


def _two_sample_z(k1: int, n1: int, k2: int, n2: int) -> float:
    pooled = (k1 + k2) / (n1 + n2)
    var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)
    if var == 0.0:
        return 0.0
    return (k1 / n1 - k2 / n2) / math.sqrt(var)


def qnd_destructive_equivalence(config: ExperimentConfig, min_good: int = 100, sigma: float = 5.0) -> EquivalenceReport:
    """Compare good-event class frequencies of the destructive and QND{1} pipelines."""
    destructive = run_sweep(replace(config, pipeline=Destructive()), keep_log=False)
    qnd = run_sweep(replace(config, pipeline=QND(1)), keep_log=False)
    z_scores = []
    inconclusive = False
    for sd, sq in zip(destructive.summaries, qnd.summaries):
        if sd.n_good < min_good or sq.n_good < min_good:
            inconclusive = True
            z_scores.append({})
            continue
        z_scores.append({
            GoodClass.COINCIDENCE_11.value: _two_sample_z(sd.n_coincidence, sd.n_good, sq.n_coincidence, sq.n_good),
            GoodClass.SINGLE_10.value: _two_sample_z(sd.n_single_10, sd.n_good, sq.n_single_10, sq.n_good),
            GoodClass.SINGLE_01.value: _two_sample_z(sd.n_single_01, sd.n_good, sq.n_single_01, sq.n_good),
        })
    return EquivalenceReport(
        list(config.betas),
        [s.n_good for s in destructive.summaries],
        [s.n_good for s in qnd.summaries],
        z_scores,
        inconclusive,
        sigma,
    )


def good_events(events: Iterable[DetectionEvent]) -> list[DetectionEvent]:
    return [e for e in events if e.good]
