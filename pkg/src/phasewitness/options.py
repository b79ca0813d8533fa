"""Runtime switches for the accelerated kernels.

``PHASEWITNESS_DISABLE_NUMBA=1`` forces the pure-numpy code path.
``PHASEWITNESS_THREADS=N`` caps numba's worker threads.
"""

import os

_FALSY = {"", "0", "false", "no", "off"}


def _flag(name: str) -> bool:
    return os.getenv(name, "").strip().lower() not in _FALSY


DISABLE_NUMBA = _flag("PHASEWITNESS_DISABLE_NUMBA")

# skip numba's TBB probe, which warns on older system TBB builds
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not DISABLE_NUMBA


def thread_cap() -> int | None:
    raw = os.getenv("PHASEWITNESS_THREADS", "").strip()
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        return None
    return n if n > 0 else None


def apply_thread_cap() -> None:
    """Push ``PHASEWITNESS_THREADS`` into numba, clamped to what numba allows."""
    cap = thread_cap()
    if cap is None or not USE_NUMBA:
        return
    import numba

    numba.set_num_threads(max(1, min(cap, numba.config.NUMBA_NUM_THREADS)))
