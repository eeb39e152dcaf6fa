import numpy as np
import pytest

from ssmshrink.dssm import random_stable_system
from ssmshrink.lqo import LqoSystem

ACCEPTANCE_LINES = []


def rand_sys(rng, n, m, p, c=1, radius=0.95):
    return random_stable_system(rng, n, m, p, c, radius=radius)


def scalar_sys(lam, B, C, U):
    return LqoSystem([lam], [[B]], [[C]], [[[U]]])


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def reduced_pair(seed, xi, n, m, r, c=1):
    """A synthetic model and a reduced copy built from random stable ROMs."""
    from ssmshrink.dssm import build_reduced_dssm, synth_random_dssm
    from ssmshrink.reduce import init_random_stable

    full = synth_random_dssm(xi, n, m, c, seed)
    roms = [init_random_stable(r, m, m, c, seed * 31 + i) for i in range(xi)]
    return full, build_reduced_dssm(full, roms)
