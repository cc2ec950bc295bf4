import numpy as np
import pytest
from scipy import linalg

from brownian_sse.fock import FockSpace, PureState

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_state(rng, dim, support=None):
    """Random normalized state supported on the lowest ``support`` levels."""
    support = support or dim // 2
    v = np.zeros(dim, complex)
    v[:support] = rng.normal(size=support) + 1j * rng.normal(size=support)
    return PureState(FockSpace(dim), v / np.linalg.norm(v))


def squeezed_state(space, r, phi, alpha=0.0):
    """exp(alpha a^dag - h.c.) exp((r e^{-2i phi} a^2 - h.c.)/2) |0>, built by expm."""
    a = np.diag(np.sqrt(np.arange(1, space.dim)), 1).astype(complex)
    z = r * np.exp(2j * phi)
    s = linalg.expm(0.5 * (np.conj(z) * a @ a - z * a.T @ a.T))
    d = linalg.expm(alpha * a.T - np.conj(alpha) * a)
    v = d @ s[:, 0]
    return PureState(space, v / np.linalg.norm(v))
