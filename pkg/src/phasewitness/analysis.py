"""Closed-form predictions, source discrimination and phase-difference estimation.

In the one-photon-per-port sector, with both analyzers at angle ``beta`` and
an effective relative phase ``theta`` between the ``|HV>`` and ``|VH>``
branches (``theta = Delta + delta``), the outcome probabilities are::

    P11   = c^2 s^2 (1 + cos theta)
    Pdiff = c^4 + s^4 - 2 c^2 s^2 cos theta
    P00   = c^2 s^2 (1 + cos theta)

with ``c = cos beta`` and ``s = sin beta``.  A random-phase source averages
``cos theta`` to zero.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .fock import SqueezeParams
from .sources import wrap_pi

LLR_EPSILON = 1e-9
DEFAULT_THRESHOLD = 6.9
Z95 = 1.959963984540054


class ModelKind(str, enum.Enum):
    VAN_ENK_FUCHS = "vEF"
    RUDOLPH_SANDERS = "RS"
    TWO_SOURCE = "TwoSource"


def _kind(kind) -> ModelKind:
    return kind if isinstance(kind, ModelKind) else ModelKind(kind)


@dataclass(frozen=True)
class OutcomeProbabilities:
    p11: float
    p_diff: float
    p00: float

    @property
    def conditional_coincidence(self) -> float:
        good = self.p11 + self.p_diff
        return self.p11 / good if good > 0.0 else math.nan


def predict_outcome_probabilities(kind, beta: float, delta: float = 0.0,
                                  phase_difference: float = 0.0) -> OutcomeProbabilities:
    """Sector-one outcome probabilities for the absorbing-polarizer topology."""
    kind = _kind(kind)
    c2 = math.cos(beta) ** 2
    s2 = math.sin(beta) ** 2
    cs = c2 * s2
    if kind is ModelKind.RUDOLPH_SANDERS:
        return OutcomeProbabilities(cs, c2 * c2 + s2 * s2, cs)
    theta = delta + (phase_difference if kind is ModelKind.TWO_SOURCE else 0.0)
    cos_t = math.cos(theta)
    both = cs * (1.0 + cos_t)
    return OutcomeProbabilities(both, c2 * c2 + s2 * s2 - 2.0 * cs * cos_t, both)


def predict_conditional_coincidence(kind, beta: float, delta: float = 0.0,
                                    phase_difference: float = 0.0) -> float:
    """Probability that a good event is a coincidence (1, 1)."""
    kind = _kind(kind)
    if kind is ModelKind.RUDOLPH_SANDERS:
        cs = (math.cos(beta) * math.sin(beta)) ** 2
        return cs / (1.0 - cs)
    probs = predict_outcome_probabilities(kind, beta, delta, phase_difference)
    good = probs.p11 + probs.p_diff
    # the good-event probability only vanishes where both branches cancel
    return probs.p11 / good if good > 0.0 else 0.0


def conditional_fringe(theta) -> np.ndarray:
    """Conditional coincidence at 45 degrees versus effective phase ``theta``."""
    cos_t = np.cos(theta)
    return (1.0 + cos_t) / (3.0 - cos_t)


def predict_good_event_rate(params: SqueezeParams) -> float:
    """Probability that a shot lands in the one-photon-per-port sector."""
    x = params.lam**2
    return 2.0 * x * (1.0 - x) ** 2


def contamination_ratio(params: SqueezeParams) -> float:
    """``P(n = 1) / P(n >= 2)`` for the untruncated joint state.

    Uses ``sum_{n>=2} (n+1) x^n = x^2 (3 - 2x) / (1 - x)^2`` with ``x = lambda^2``.
    """
    if params.r <= 0.0:
        raise ValueError("contamination ratio is undefined at r = 0")
    x = params.lam**2
    return 2.0 * (1.0 - x) ** 2 / (x * (3.0 - 2.0 * x))


def sector_probability(params: SqueezeParams, n: int) -> float:
    x = params.lam**2
    return (n + 1) * x**n * (1.0 - x) ** 2


@dataclass(frozen=True)
class PredictionRow:
    beta: float
    delta: float
    model: str
    p11: float
    p_diff: float
    p00: float
    conditional_coincidence: float


def prediction_table(betas: Sequence[float], deltas: Sequence[float] = (0.0,),
                     models: Sequence = ("vEF", "RS")) -> list[PredictionRow]:
    """Closed-form rows for every (model, beta, delta).

    ``models`` entries are ``"vEF"``, ``"RS"`` or ``("TwoSource", Delta)``.
    """
    rows = []
    for model in models:
        if isinstance(model, (tuple, list)):
            kind, diff = _kind(model[0]), float(model[1])
            label = f"TwoSource({diff!r})"
        else:
            kind, diff = _kind(model), 0.0
            label = kind.value
        for beta in betas:
            for delta in deltas:
                p = predict_outcome_probabilities(kind, beta, delta, diff)
                rows.append(PredictionRow(beta, delta, label, p.p11, p.p_diff, p.p00,
                                          predict_conditional_coincidence(kind, beta, delta, diff)))
    return rows


def beta0_scan(phase_difference: float, betas: Sequence[float] | None = None) -> tuple[float, float]:
    """Scan pure analyzer rotations for the most coincident angle.

    Returns ``(beta_best, conditional_coincidence_at_best)``.  For a nonzero
    phase difference the maximum stays below 1.
    """
    if betas is None:
        betas = np.linspace(0.0, math.pi, 720, endpoint=False)
    vals = [predict_conditional_coincidence(ModelKind.TWO_SOURCE, b, 0.0, phase_difference) for b in betas]
    i = int(np.argmax(vals))
    return float(betas[i]), float(vals[i])


class Verdict(str, enum.Enum):
    VAN_ENK_FUCHS = "VanEnkFuchs"
    RUDOLPH_SANDERS = "RudolphSanders"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class DiscriminationResult:
    llr: float
    verdict: Verdict
    n_good_used: int
    error_bound: float
    threshold: float = DEFAULT_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "llr": self.llr,
            "verdict": self.verdict.value,
            "n_good_used": self.n_good_used,
            "error_bound": self.error_bound,
            "threshold": self.threshold,
        }


def _class_name(event) -> str:
    cls = getattr(event, "good_class", event)
    return getattr(cls, "value", cls)


def discriminate(events: Iterable, threshold: float = DEFAULT_THRESHOLD,
                 epsilon: float = LLR_EPSILON) -> DiscriminationResult:
    """Log-likelihood ratio of fixed-phase over random-phase for 45-degree good events.

    ``events`` holds good-event classes (or objects with a ``good_class``).
    """
    beta = math.pi / 4
    p_vef = min(max(predict_conditional_coincidence(ModelKind.VAN_ENK_FUCHS, beta), epsilon), 1.0 - epsilon)
    p_rs = predict_conditional_coincidence(ModelKind.RUDOLPH_SANDERS, beta)
    gain_11 = math.log(p_vef / p_rs)
    gain_single = math.log((1.0 - p_vef) / (1.0 - p_rs))
    n_11 = n_single = 0
    for ev in events:
        name = _class_name(ev)
        if name == "Coincidence11":
            n_11 += 1
        elif name in ("Single10", "Single01"):
            n_single += 1
        else:
            raise ValueError(f"discriminate needs good events only, got {name!r}")
    n = n_11 + n_single
    llr = n_11 * gain_11 + n_single * gain_single
    if n == 0 or abs(llr) < threshold:
        verdict = Verdict.INCONCLUSIVE
    elif llr > 0:
        verdict = Verdict.VAN_ENK_FUCHS
    else:
        verdict = Verdict.RUDOLPH_SANDERS
    return DiscriminationResult(llr, verdict, n, min(1.0, math.exp(-abs(llr))), threshold)


class PhaseMethod(str, enum.Enum):
    FRINGE_FIT = "FringeFit"
    TWO_QUADRATURE = "TwoQuadrature"


@dataclass(frozen=True)
class PhaseEstimate:
    delta_hat: float
    ci_halfwidth: float
    n_good_used: int
    method: PhaseMethod
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "delta_hat_rad": self.delta_hat,
            "ci_halfwidth_rad": self.ci_halfwidth,
            "n_good_used": self.n_good_used,
            "method": self.method.value,
            "degenerate": self.degenerate,
        }


def _fringe_data(groups) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(delta, n_coincidence, n_good) arrays from summaries or tuples."""
    deltas, k, n = [], [], []
    for g in groups:
        if hasattr(g, "n_good"):
            if not math.isclose(g.beta, math.pi / 4, abs_tol=1e-9):
                raise ValueError(f"phase estimation needs 45-degree data, got beta={g.beta}")
            deltas.append(g.delta)
            k.append(g.n_coincidence)
            n.append(g.n_good)
        else:
            d, kk, nn = g
            deltas.append(d)
            k.append(kk)
            n.append(nn)
    return np.asarray(deltas, float), np.asarray(k, float), np.asarray(n, float)


def _linearized(f: np.ndarray) -> np.ndarray:
    """Invert the fringe: ``cos(theta) = (3 f - 1) / (1 + f)``."""
    return (3.0 * f - 1.0) / (1.0 + f)


def estimate_phase_difference(groups, method: PhaseMethod | str = PhaseMethod.FRINGE_FIT,
                              z: float = Z95) -> PhaseEstimate:
    """Estimate ``Delta = phi2 - phi1`` from coincidence fractions versus retardance.

    ``groups`` are 45-degree summaries (or ``(delta, n_coincidence, n_good)``
    tuples), one per retardance setting.  FringeFit needs at least 8 settings;
    TwoQuadrature uses the settings at 0 and pi/2.
    """
    method = PhaseMethod(method)
    deltas, k, n = _fringe_data(groups)
    used = n > 0
    n_used = int(n[used].sum())
    if method is PhaseMethod.TWO_QUADRATURE:
        return _two_quadrature(deltas, k, n, z)
    if used.sum() < 8:
        raise ValueError("FringeFit needs at least 8 retardance settings with good events")
    deltas, k, n = deltas[used], k[used], n[used]
    f = k / n

    # linear start: cos(Delta + d) = cos(Delta) cos(d) - sin(Delta) sin(d)
    design = np.column_stack([np.cos(deltas), -np.sin(deltas)])
    (a, b), *_ = np.linalg.lstsq(design, _linearized(f), rcond=None)
    start = math.atan2(b, a)

    res = optimize.least_squares(lambda p: conditional_fringe(p[0] + deltas) - f, x0=[start])
    delta_hat = wrap_pi(res.x[0])

    # sandwich variance with binomial noise at the fitted fractions
    theta = delta_hat + deltas
    cos_t = np.cos(theta)
    jac = -4.0 * np.sin(theta) / (3.0 - cos_t) ** 2
    f_fit = conditional_fringe(theta)
    var_f = f_fit * (1.0 - f_fit) / n
    jtj = float(jac @ jac)
    degenerate = jtj == 0.0
    if degenerate:
        se = math.inf
    else:
        se = math.sqrt(float(jac**2 @ var_f)) / jtj
    # a fringe indistinguishable from flat carries no phase information
    amplitude = math.hypot(a, b)
    resid = _linearized(f) - design @ np.array([a, b])
    noise = math.sqrt(max(float(resid @ resid), 1e-300) / max(len(f) - 2, 1)) * math.sqrt(2.0 / len(f))
    if amplitude < 3.0 * noise or not math.isfinite(se):
        degenerate = True
    half = math.pi if degenerate else max(z * se, 1e-12)
    return PhaseEstimate(delta_hat, half, n_used, PhaseMethod.FRINGE_FIT, degenerate)


def _two_quadrature(deltas, k, n, z) -> PhaseEstimate:
    def pick(target):
        hits = np.flatnonzero(np.isclose(np.mod(deltas - target + math.pi, 2 * math.pi) - math.pi, 0.0, atol=1e-9))
        if hits.size == 0:
            raise ValueError(f"TwoQuadrature needs a setting at delta={target}")
        return k[hits].sum(), n[hits].sum()

    k0, n0 = pick(0.0)
    k1, n1 = pick(math.pi / 2)
    if n0 == 0 or n1 == 0:
        raise ValueError("TwoQuadrature needs good events at both quadratures")
    f0, f1 = k0 / n0, k1 / n1
    x = _linearized(f0)          # cos(Delta)
    y = -_linearized(f1)         # sin(Delta)
    delta_hat = wrap_pi(math.atan2(y, x))
    # d/df of (3f - 1)/(1 + f) is 4 / (1 + f)^2
    var_x = (4.0 / (1.0 + f0) ** 2) ** 2 * f0 * (1.0 - f0) / n0
    var_y = (4.0 / (1.0 + f1) ** 2) ** 2 * f1 * (1.0 - f1) / n1
    r2 = x * x + y * y
    degenerate = r2 == 0.0
    if degenerate:
        half = math.pi
    else:
        var = (y * y * var_x + x * x * var_y) / (r2 * r2)
        half = z * math.sqrt(var)
        if math.sqrt(r2) < 3.0 * math.sqrt(var_x + var_y):
            degenerate = True
            half = math.pi
        elif half == 0.0:
            # both fractions at a boundary: report the resolution one more event would give
            half = z / math.sqrt(min(n0, n1))
    return PhaseEstimate(delta_hat, half, int(n0 + n1), PhaseMethod.TWO_QUADRATURE, degenerate)
