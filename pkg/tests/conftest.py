import math

import numpy as np
import pytest

from phasewitness.fock import FockKet4, PureState
from phasewitness.oracle import joint_state, random_state, sector_one_state  # noqa: F401

QUARTER_PI = math.pi / 4


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


@pytest.fixture
def bell_state():
    """Equal-phase one-photon-per-port state."""
    return sector_one_state(0.0)


def ket_state(*ket, cutoff=2):
    return PureState({FockKet4(*ket): 1.0}, cutoff)


def assert_states_close(a: PureState, b: PureState, tol=1e-12):
    kets = set(a.amplitudes) | set(b.amplitudes)
    worst = max((abs(a.amplitude(k) - b.amplitude(k)) for k in kets), default=0.0)
    assert worst < tol, f"states differ by {worst:.3e}"


# criterion lines from test_acceptance, shown even when output is captured
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
