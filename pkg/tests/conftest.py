import math

import numpy as np
from numpy.polynomial import legendre


def naive_f(j, x):
    """Orthonormal shifted Legendre value through numpy's Legendre series."""
    c = np.zeros(j + 1)
    c[j] = 1.0
    return math.sqrt(2 * j + 1) * legendre.legval(2 * np.asarray(x, dtype=float) - 1, c)


def rejection_sample(rho, rho_max, n, rng):
    """Draw ``n`` points on [0, 1] from the density ``rho`` bounded by ``rho_max``."""
    out = []
    have = 0
    while have < n:
        x = rng.uniform(0, 1, 2 * n)
        keep = x[rng.uniform(0, rho_max, 2 * n) < rho(x)]
        out.append(keep)
        have += keep.size
    return np.concatenate(out)[:n]


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
