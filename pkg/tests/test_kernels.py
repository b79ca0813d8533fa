import math
import os
import subprocess
import sys

import numpy as np
import pytest

from phasewitness import kernels, options
from phasewitness.engine import QND, Destructive, ExperimentConfig, _sector_table, run_shot, simulate_shots
from phasewitness.fock import SqueezeParams, max_occupation
from phasewitness.optics import AnalyzerSetting, DetectorModel, Resolving, Topology, transfer_stack
from phasewitness.sources import RudolphSanders, TwoSource, VanEnkFuchs

needs_numba = pytest.mark.skipif(not options.USE_NUMBA, reason="numba backend disabled")


def block_inputs(r=0.3, beta=0.6, delta=1.3, shots=20_000, seed=5):
    cfg = ExperimentConfig(SqueezeParams(r), RudolphSanders(), betas=(beta,), delta=delta, seed=seed)
    coeffs, cdf = _sector_table(cfg.params.r, cfg.cutoff)
    rng = np.random.default_rng(seed)
    phi1, phi2 = rng.uniform(0, 2 * math.pi, (2, shots))
    max_n = max_occupation(cfg.cutoff)
    ta = transfer_stack(max_n, AnalyzerSetting(beta))
    tb = transfer_stack(max_n, AnalyzerSetting(beta, delta))
    return cfg.stream_key(beta), np.arange(shots, dtype=np.int64), phi1, phi2, cdf, coeffs, ta, tb


class TestBackends:
    @needs_numba
    @pytest.mark.parametrize("qnd_n", [-1, 1, 2])
    def test_numba_matches_numpy_exactly(self, qnd_n):
        args = block_inputs()
        fast = kernels.simulate_block_numba(*args, qnd_n)
        ref = kernels.simulate_block_numpy(*args, qnd_n)
        for a, b in zip(fast, ref):
            assert np.array_equal(a, b)

    def test_discarded_shots(self):
        args = block_inputs()
        pass_a, pass_b, sector = kernels.simulate_block_numpy(*args, 1)
        off = sector != 1
        assert off.any() and (~off).any()
        assert np.all(pass_a[off] == kernels.DISCARDED) and np.all(pass_b[off] == kernels.DISCARDED)
        assert np.all((pass_a[~off] >= 0) & (pass_a[~off] <= 1))

    def test_pass_counts_bounded_by_sector(self):
        pass_a, pass_b, sector = kernels.simulate_block(*block_inputs(r=0.5))
        assert np.all(pass_a <= sector) and np.all(pass_b <= sector)
        assert sector.max() >= 3

    def test_env_flag_selects_numpy(self):
        code = "from phasewitness import kernels; print(kernels.backend_name())"
        env = dict(os.environ, PHASEWITNESS_DISABLE_NUMBA="1")
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "numpy"

    def test_thread_cap_parsing(self, monkeypatch):
        monkeypatch.setenv("PHASEWITNESS_THREADS", "3")
        assert options.thread_cap() == 3
        for bad in ("zero", "0", "-2", ""):
            monkeypatch.setenv("PHASEWITNESS_THREADS", bad)
            assert options.thread_cap() is None


CONFIGS = {
    "rs-absorbing": dict(model=RudolphSanders()),
    "vef-qnd": dict(model=VanEnkFuchs(0.4), pipeline=QND(1)),
    "two-source-pbs": dict(model=TwoSource(0.2, 1.4), detector=DetectorModel(Topology.POLARIZING_BEAM_SPLITTER), delta=0.8),
    "rs-threshold": dict(model=RudolphSanders(), detector=DetectorModel(resolving=Resolving.THRESHOLD)),
}


class TestReferencePath:
    @pytest.mark.parametrize("name", sorted(CONFIGS))
    def test_kernel_matches_sparse_state_path(self, name):
        cfg = ExperimentConfig(SqueezeParams(0.4), betas=(0.5,), seed=13, **CONFIGS[name])
        log = simulate_shots(cfg, 0.5, 0, 600)
        for i, event in enumerate(log):
            ref = run_shot(cfg, 0.5, i)
            assert ref == event, f"shot {i}"

    def test_blocks_are_position_independent(self):
        cfg = ExperimentConfig(SqueezeParams(0.2), RudolphSanders(), betas=(0.3,), seed=3)
        whole = simulate_shots(cfg, 0.3, 0, 1000)
        tail = simulate_shots(cfg, 0.3, 600, 400)
        assert np.array_equal(whole.count_a[600:], tail.count_a)
        assert np.array_equal(whole.phi2[600:], tail.phi2)

    def test_destructive_default(self):
        assert ExperimentConfig(SqueezeParams(0.1), RudolphSanders()).pipeline == Destructive()
