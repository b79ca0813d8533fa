"""Per-shot sampling kernels.

A shot is sampled in two stages.  The port photon number ``N`` is drawn
first from the (phase independent) sector table; analyzers conserve the
photon number at each port, so sectors never interfere.  Inside sector ``N``
the amplitude over pass-mode counts ``(p_a, p_b)`` is::

    amp[p_a, p_b] = sum_m c_{N-m} c_m e^{i((N-m) phi1 + m phi2)} TA[N, N-m, p_a] TB[N, m, p_b]

with ``TA``/``TB`` the stacked port transfer matrices (port A sees ``N-m`` H
photons, port B sees ``m``).  One uniform then picks ``(p_a, p_b)`` in
row-major order.

Both backends perform the same floating point operations in the same order,
so they agree shot for shot.
"""

from __future__ import annotations

import numpy as np

from . import options
from .rng import DRAW_OUTCOME, DRAW_SECTOR, counter_uniforms

DISCARDED = -1


def simulate_block_numpy(key, shots, phi1, phi2, sector_cdf, coeffs, ta, tb, qnd_n):
    shots = np.asarray(shots, dtype=np.int64)
    n_shots = shots.shape[0]
    kmax = coeffs.shape[0] - 1
    u0 = counter_uniforms(key, shots, DRAW_SECTOR)
    sector = np.minimum(np.searchsorted(sector_cdf, u0, side="right"), sector_cdf.shape[0] - 1)
    pass_a = np.zeros(n_shots, dtype=np.int64)
    pass_b = np.zeros(n_shots, dtype=np.int64)
    if qnd_n >= 0:
        rejected = sector != qnd_n
        pass_a[rejected] = DISCARDED
        pass_b[rejected] = DISCARDED
    for n in range(1, sector_cdf.shape[0]):
        idx = np.nonzero(sector == n)[0]
        if qnd_n >= 0 and n != qnd_n:
            continue
        if idx.size == 0:
            continue
        amp = np.zeros((idx.size, n + 1, n + 1), dtype=np.complex128)
        for m in range(max(0, n - kmax), min(n, kmax) + 1):
            l = n - m
            w = coeffs[l] * coeffs[m]
            if w == 0.0:
                continue
            theta = l * phi1[idx] + m * phi2[idx]
            rot = np.empty(idx.size, dtype=np.complex128)
            rot.real = np.cos(theta)
            rot.imag = np.sin(theta)
            alpha = w * rot
            ta_row = alpha[:, None] * ta[n, l, : n + 1][None, :]
            amp += ta_row[:, :, None] * tb[n, m, : n + 1][None, None, :]
        flat = amp.reshape(idx.size, -1)
        prob = flat.real * flat.real + flat.imag * flat.imag
        cum = np.cumsum(prob, axis=1)
        target = counter_uniforms(key, shots[idx], DRAW_OUTCOME) * cum[:, -1]
        hit = cum > target[:, None]
        choice = np.argmax(hit, axis=1)
        missed = ~hit.any(axis=1)
        if missed.any():
            last_nonzero = prob.shape[1] - 1 - np.argmax((prob[:, ::-1] > 0.0), axis=1)
            choice[missed] = last_nonzero[missed]
        pass_a[idx] = choice // (n + 1)
        pass_b[idx] = choice % (n + 1)
    return pass_a, pass_b, sector.astype(np.int64)


if options.HAS_NUMBA:
    from numba import njit, prange

    from .rng import counter_uniform_nb

    @njit(cache=True, parallel=True)
    def _simulate_block_nb(key, shots, phi1, phi2, sector_cdf, coeffs, ta, tb, qnd_n):
        n_shots = shots.shape[0]
        kmax = coeffs.shape[0] - 1
        n_sectors = sector_cdf.shape[0]
        pass_a = np.zeros(n_shots, dtype=np.int64)
        pass_b = np.zeros(n_shots, dtype=np.int64)
        sector = np.zeros(n_shots, dtype=np.int64)
        for i in prange(n_shots):
            u0 = counter_uniform_nb(key, shots[i], DRAW_SECTOR)
            n = n_sectors - 1
            for j in range(n_sectors):
                if u0 < sector_cdf[j]:
                    n = j
                    break
            sector[i] = n
            if qnd_n >= 0 and n != qnd_n:
                pass_a[i] = DISCARDED
                pass_b[i] = DISCARDED
                continue
            if n == 0:
                continue
            amp = np.zeros((n + 1, n + 1), dtype=np.complex128)
            for m in range(max(0, n - kmax), min(n, kmax) + 1):
                l = n - m
                w = coeffs[l] * coeffs[m]
                if w == 0.0:
                    continue
                theta = l * phi1[i] + m * phi2[i]
                alpha = w * complex(np.cos(theta), np.sin(theta))
                for pa in range(n + 1):
                    t = alpha * ta[n, l, pa]
                    for pb in range(n + 1):
                        amp[pa, pb] += t * tb[n, m, pb]
            total = 0.0
            for pa in range(n + 1):
                for pb in range(n + 1):
                    z = amp[pa, pb]
                    total += z.real * z.real + z.imag * z.imag
            target = counter_uniform_nb(key, shots[i], DRAW_OUTCOME) * total
            cum = 0.0
            chosen = -1
            last_nonzero = 0
            for q in range((n + 1) * (n + 1)):
                z = amp[q // (n + 1), q % (n + 1)]
                p = z.real * z.real + z.imag * z.imag
                if p > 0.0:
                    last_nonzero = q
                cum += p
                if chosen < 0 and target < cum:
                    chosen = q
                    break
            if chosen < 0:
                chosen = last_nonzero
            pass_a[i] = chosen // (n + 1)
            pass_b[i] = chosen % (n + 1)
        return pass_a, pass_b, sector

    def simulate_block_numba(key, shots, phi1, phi2, sector_cdf, coeffs, ta, tb, qnd_n):
        return _simulate_block_nb(
            np.uint64(key),
            np.ascontiguousarray(shots, dtype=np.int64),
            np.ascontiguousarray(phi1, dtype=np.float64),
            np.ascontiguousarray(phi2, dtype=np.float64),
            np.ascontiguousarray(sector_cdf, dtype=np.float64),
            np.ascontiguousarray(coeffs, dtype=np.float64),
            np.ascontiguousarray(ta, dtype=np.complex128),
            np.ascontiguousarray(tb, dtype=np.complex128),
            np.int64(qnd_n),
        )

else:  # pragma: no cover
    simulate_block_numba = None


def simulate_block(key, shots, phi1, phi2, sector_cdf, coeffs, ta, tb, qnd_n=-1):
    """Sample pass-mode counts and sector for a block of shots.

    Returns ``(pass_a, pass_b, sector)``; shots rejected by a QND sector
    filter (``qnd_n >= 0``) report ``-1`` counts.
    """
    if options.USE_NUMBA:
        options.apply_thread_cap()
        return simulate_block_numba(key, shots, phi1, phi2, sector_cdf, coeffs, ta, tb, qnd_n)
    return simulate_block_numpy(key, shots, phi1, phi2, sector_cdf, coeffs, ta, tb, qnd_n)


def backend_name() -> str:
    return "numba" if options.USE_NUMBA else "numpy"
