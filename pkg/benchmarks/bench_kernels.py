"""Shot-kernel benchmark: numba JIT against the pure-numpy fallback.

Both backends run the same block and must return identical arrays.

    python benchmarks/bench_kernels.py --shots 200000 --repeat 3
"""
import argparse
import math
import time

import numpy as np

from phasewitness import kernels, options
from phasewitness.engine import ExperimentConfig, _sector_table
from phasewitness.fock import SqueezeParams, max_occupation
from phasewitness.optics import AnalyzerSetting, transfer_stack
from phasewitness.sources import RudolphSanders, draw_phases


def block_inputs(shots, r=0.1, beta=math.pi / 4, delta=0.0, seed=0):
    cfg = ExperimentConfig(SqueezeParams(r), RudolphSanders(), betas=(beta,), delta=delta, seed=seed)
    key = cfg.stream_key(beta)
    idx = np.arange(shots, dtype=np.int64)
    phi1, phi2 = draw_phases(cfg.model, key, idx)
    coeffs, cdf = _sector_table(cfg.params.r, cfg.cutoff)
    max_n = max_occupation(cfg.cutoff)
    ta = transfer_stack(max_n, AnalyzerSetting(beta))
    tb = transfer_stack(max_n, AnalyzerSetting(beta, delta))
    return key, idx, phi1, phi2, cdf, coeffs, ta, tb


def best_time(fn, args, repeat):
    out, best = None, math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--shots", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--qnd", type=int, default=-1, help="kept sector, -1 for destructive")
    args = parser.parse_args()

    inputs = block_inputs(args.shots) + (args.qnd,)
    t_np, ref = best_time(kernels.simulate_block_numpy, inputs, args.repeat)
    print(f"numpy  {args.shots:>10d} shots  {t_np:8.3f} s  {args.shots / t_np:12.0f} shots/s")

    if not options.USE_NUMBA:
        print("numba  disabled (PHASEWITNESS_DISABLE_NUMBA set or numba missing)")
        return
    kernels.simulate_block_numba(*block_inputs(16) + (args.qnd,))  # compile outside the timer
    t_nb, fast = best_time(kernels.simulate_block_numba, inputs, args.repeat)
    same = all(np.array_equal(a, b) for a, b in zip(fast, ref))
    print(f"numba  {args.shots:>10d} shots  {t_nb:8.3f} s  {args.shots / t_nb:12.0f} shots/s")
    print(f"speedup {t_np / t_nb:.1f}x, outputs identical: {same}")
    if not same:
        raise SystemExit("backends disagree")


if __name__ == "__main__":
    main()
