import numpy as np
import pytest

from sgswe import system
from sgswe.pce import MeasureSpec, build_basis


@pytest.fixture(scope="session")
def basis4():
    return build_basis(MeasureSpec.uniform(4))


@pytest.fixture(scope="session")
def basis2d():
    return build_basis(MeasureSpec((3.0, 0.0), (1.0, 0.0), (3, 3)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_primitives(basis, rng, n=(), spread=0.15):
    """Random hyperbolic ``(h, u, v)`` coefficient stacks of shape ``n + (K,)``."""
    n = tuple(np.atleast_1d(n)) if n != () else ()
    K = basis.size
    while True:
        h = spread * rng.standard_normal(n + (K,)) / np.sqrt(K)
        h[..., 0] = 1.0 + 0.5 * rng.random(n)
        if np.all(system.is_hyperbolic(basis, h)):
            break
    u = 0.3 * rng.standard_normal(n + (K,))
    v = 0.3 * rng.standard_normal(n + (K,))
    return h, u, v


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
