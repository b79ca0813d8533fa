import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm, logm

from phasewitness.engine import classify_good
from phasewitness.fock import FockKet4, PureState, overlap
from phasewitness.optics import (
    AnalyzerSetting,
    DetectorModel,
    PortOutcome,
    Resolving,
    Topology,
    apply_analyzer,
    apply_analyzers,
    exact_outcome_distribution,
    port_transfer_matrix,
    resolved_distribution,
    sample_counts,
    sample_resolved,
)
from phasewitness.rng import ShotStream, counter_uniforms, stream_key

from conftest import QUARTER_PI, assert_states_close, ket_state, random_state, sector_one_state

ABSORB = DetectorModel()
PBS = DetectorModel(Topology.POLARIZING_BEAM_SPLITTER)
THRESHOLD = DetectorModel(resolving=Resolving.THRESHOLD)

angles = st.floats(0.0, math.pi, allow_nan=False, exclude_max=True)
retardances = st.floats(0.0, 2 * math.pi, allow_nan=False, exclude_max=True)


def lifted_block(n, beta, delta):
    """Independent oracle: exponentiate the second-quantized generator of the 2x2 map.

    Columns of ``u`` are images of H and V in the (pass, orth) basis; the
    n-photon block is expm of ``sum_ij G_ij a_i^dag a_j`` with ``G = logm(u)``.
    """
    c, s = math.cos(beta), math.sin(beta)
    ph = cmath.exp(1j * delta)
    u = np.array([[c, -ph.conjugate() * s], [ph * s, c]])
    g = logm(u)
    dim = n + 1  # basis |k, n-k> with k photons in the first mode
    gen = np.zeros((dim, dim), dtype=complex)
    for k in range(dim):
        occ = (k, n - k)
        for i in range(2):
            for j in range(2):
                if occ[j] == 0:
                    continue
                new = list(occ)
                new[j] -= 1
                amp = math.sqrt(occ[j])
                new[i] += 1
                amp *= math.sqrt(new[i])
                gen[new[0], k] += g[i, j] * amp
    return expm(gen)  # [out_k, in_k]


class TestAnalyzerSetting:
    @pytest.mark.parametrize("beta, expected", [(math.pi, 0.0), (-0.25, math.pi - 0.25), (3.5, 3.5 - math.pi)])
    def test_beta_reduced(self, beta, expected):
        assert AnalyzerSetting(beta).beta == pytest.approx(expected, abs=1e-15)

    def test_delta_reduced(self):
        assert AnalyzerSetting(0.0, -math.pi / 2).delta == pytest.approx(1.5 * math.pi)


class TestTransferMatrix:
    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    @pytest.mark.parametrize("beta, delta", [(0.3, 0.0), (QUARTER_PI, 1.1), (2.0, 4.0)])
    def test_matches_expm_lifting(self, n, beta, delta):
        t = port_transfer_matrix(n, AnalyzerSetting(beta, delta))
        oracle = lifted_block(n, beta, delta)
        # t is indexed [n_h in, pass out]; oracle [pass out, H in]
        assert np.max(np.abs(t - oracle.T)) < 1e-12

    @given(st.integers(0, 8), angles, retardances)
    @settings(max_examples=60)
    def test_block_unitary(self, n, beta, delta):
        t = port_transfer_matrix(n, AnalyzerSetting(beta, delta))
        assert np.max(np.abs(t @ t.conj().T - np.eye(n + 1))) < 1e-12


class TestApplyAnalyzer:
    def test_identity_at_zero(self):
        state = random_state(np.random.default_rng(1), 20, 2)
        for port in "AB":
            assert_states_close(apply_analyzer(state, port, AnalyzerSetting()), state)

    def test_quarter_turn_maps_h_to_v(self):
        out = apply_analyzer(ket_state(1, 0, 0, 0), "A", AnalyzerSetting(math.pi / 2))
        assert set(out.amplitudes) == {FockKet4(0, 1, 0, 0)}
        assert abs(abs(out.amplitude((0, 1, 0, 0))) - 1.0) < 1e-15

    def test_port_b_slots(self):
        # port B keeps H in the last slot and V in the third
        out = apply_analyzer(ket_state(0, 0, 0, 1), "B", AnalyzerSetting(math.pi / 2))
        assert set(out.amplitudes) == {FockKet4(0, 0, 1, 0)}

    def test_bad_port(self):
        with pytest.raises(ValueError):
            apply_analyzer(ket_state(0, 0, 0, 0), "C", AnalyzerSetting())

    @given(st.integers(0, 2**32 - 1), angles, retardances)
    @settings(max_examples=30)
    def test_preserves_overlaps(self, seed, beta, delta):
        rng = np.random.default_rng(seed)
        a, b = random_state(rng, 20, 2), random_state(rng, 20, 2)
        s = AnalyzerSetting(beta, delta)
        for port in "AB":
            ra, rb = apply_analyzer(a, port, s), apply_analyzer(b, port, s)
            assert abs(ra.norm() - 1.0) < 1e-12
            assert abs(overlap(ra, rb) - overlap(a, b)) < 1e-12

    @given(st.integers(0, 2**32 - 1), st.floats(0, math.pi / 2, exclude_max=True), st.floats(0, math.pi / 2, exclude_max=True))
    @settings(max_examples=30)
    def test_rotations_compose(self, seed, b1, b2):
        state = random_state(np.random.default_rng(seed), 20, 2)
        for port in "AB":
            two = apply_analyzer(apply_analyzer(state, port, AnalyzerSetting(b1)), port, AnalyzerSetting(b2))
            assert_states_close(two, apply_analyzer(state, port, AnalyzerSetting(b1 + b2)))

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_half_turn_is_block_parity(self, n):
        # reducing beta mod pi drops a (-1)^n phase per photon-number block
        assert AnalyzerSetting(0.4 + math.pi).beta == pytest.approx(0.4, abs=1e-15)
        raw = lifted_block(n, 0.4 + math.pi, 0.0).T
        assert np.max(np.abs(raw - (-1) ** n * port_transfer_matrix(n, AnalyzerSetting(0.4)))) < 1e-12


class TestExactDistribution:
    def test_bell_state_at_45(self, bell_state):
        settings_ = (AnalyzerSetting(QUARTER_PI), AnalyzerSetting(QUARTER_PI))
        dist = exact_outcome_distribution(bell_state, ABSORB, settings_)
        assert dist[PortOutcome(1, 1)] == pytest.approx(0.5, abs=1e-15)
        assert dist[PortOutcome(0, 0)] == pytest.approx(0.5, abs=1e-15)
        assert dist.get(PortOutcome(1, 0), 0.0) < 1e-30
        assert dist.get(PortOutcome(0, 1), 0.0) < 1e-30

    def test_bell_state_at_zero(self, bell_state):
        dist = exact_outcome_distribution(bell_state, ABSORB, (AnalyzerSetting(), AnalyzerSetting()))
        assert set(dist) == {PortOutcome(0, 1), PortOutcome(1, 0)}
        assert dist[PortOutcome(1, 0)] == pytest.approx(0.5, abs=1e-15)
        assert dist[PortOutcome(0, 1)] == pytest.approx(0.5, abs=1e-15)

    def test_random_phase_average_at_45(self):
        grid = np.linspace(0, 2 * math.pi, 16, endpoint=False)
        settings_ = {"A": AnalyzerSetting(QUARTER_PI), "B": AnalyzerSetting(QUARTER_PI)}
        acc = {}
        for d in grid:
            for o, p in exact_outcome_distribution(sector_one_state(d), ABSORB, settings_).items():
                acc[o] = acc.get(o, 0.0) + p / len(grid)
        for o in (PortOutcome(1, 1), PortOutcome(1, 0), PortOutcome(0, 1), PortOutcome(0, 0)):
            assert acc[o] == pytest.approx(0.25, abs=1e-14)

    @given(st.integers(0, 2**32 - 1), angles, angles, retardances)
    @settings(max_examples=30)
    def test_sums_to_one(self, seed, ba, bb, delta):
        state = random_state(np.random.default_rng(seed), 15, 2)
        settings_ = (AnalyzerSetting(ba), AnalyzerSetting(bb, delta))
        for model in (ABSORB, PBS, THRESHOLD):
            assert math.fsum(exact_outcome_distribution(state, model, settings_).values()) == pytest.approx(1.0, abs=1e-12)

    @given(st.floats(-math.pi, math.pi), angles, retardances)
    @settings(max_examples=40)
    def test_pbs_marginals_match_absorbing(self, diff, beta, delta):
        state = sector_one_state(diff)
        settings_ = (AnalyzerSetting(beta), AnalyzerSetting(beta, delta))
        absorb = exact_outcome_distribution(state, ABSORB, settings_)
        marg = {}
        for o, p in exact_outcome_distribution(state, PBS, settings_).items():
            marg[o.counts] = marg.get(o.counts, 0.0) + p
        for o, p in absorb.items():
            assert marg[o.counts] == pytest.approx(p, abs=1e-15)

    def test_pbs_conserves_photons(self, bell_state):
        dist = exact_outcome_distribution(bell_state, PBS, (AnalyzerSetting(0.3), AnalyzerSetting(0.3)))
        for o in dist:
            assert o.count_a + o.reflect_a == 1 and o.count_b + o.reflect_b == 1


class TestSampling:
    def test_single_support_point(self):
        state = ket_state(1, 0, 0, 1)
        for shot in range(50):
            out = sample_counts(state, ABSORB, (AnalyzerSetting(), AnalyzerSetting()), ShotStream(stream_key(1), shot))
            assert out == PortOutcome(1, 1)

    def test_deterministic(self, bell_state):
        settings_ = (AnalyzerSetting(0.3), AnalyzerSetting(0.3))
        draws = [sample_counts(bell_state, ABSORB, settings_, ShotStream(stream_key(8), s)) for s in range(200)]
        again = [sample_counts(bell_state, ABSORB, settings_, ShotStream(stream_key(8), s)) for s in range(200)]
        assert draws == again
        assert len(set(draws)) > 1

    def test_threshold_clicks_once(self):
        out = sample_counts(ket_state(2, 0, 0, 0), THRESHOLD, (AnalyzerSetting(), AnalyzerSetting()), ShotStream(0, 0))
        assert out == PortOutcome(1, 0)
        assert classify_good(out).value == "Single10"

    def test_frequencies_within_binomial_bands(self):
        state = random_state(np.random.default_rng(11), 10, 2)
        dist = resolved_distribution(state, AnalyzerSetting(0.7), AnalyzerSetting(0.7, 2.0))
        n = 100_000
        u = counter_uniforms(stream_key(77), np.arange(n), 3)
        counts = {}
        for x in u:
            key = sample_resolved(dist, PBS, x)
            counts[key] = counts.get(key, 0) + 1
        exact = exact_outcome_distribution(state, PBS, (AnalyzerSetting(0.7), AnalyzerSetting(0.7, 2.0)))
        for o, p in exact.items():
            sigma = math.sqrt(n * p * (1 - p))
            assert abs(counts.get(o, 0) - n * p) <= 5 * sigma + 1e-9

    def test_rotated_state_norm(self, bell_state):
        out = apply_analyzers(bell_state, AnalyzerSetting(0.2), AnalyzerSetting(1.3, 0.4))
        assert isinstance(out, PureState)
        assert out.norm() == pytest.approx(1.0, abs=1e-12)
