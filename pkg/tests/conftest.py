import numpy as np
import pytest
from scipy.integrate import quad

from stochschro.fem import FemOperators, Mesh1D


def piecewise_linear(mesh: Mesh1D, coeffs):
    """Callable for the hat-space function with the given interior values."""
    xs = np.r_[0.0, mesh.nodes, 1.0]
    ys = np.r_[0.0, np.asarray(coeffs), 0.0]
    return lambda x: np.interp(x, xs, ys)


def l2_distance(f, g, n_cells=1024):
    """Brute-force L2 distance on (0, 1) by adaptive quadrature per cell."""
    edges = np.linspace(0.0, 1.0, n_cells + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += quad(lambda x: (f(x) - g(x)) ** 2, a, b, epsabs=1e-16, epsrel=1e-13)[0]
    return np.sqrt(total)


@pytest.fixture(scope="session")
def ops_cache():
    cache = {}

    def get(level):
        if level not in cache:
            cache[level] = FemOperators.build(level)
        return cache[level]

    return get


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
