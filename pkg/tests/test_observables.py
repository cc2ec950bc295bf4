import math

import numpy as np
import pytest

from brownian_sse.errors import TruncationLeakageError
from brownian_sse.fock import DensityMatrix, FockSpace
from brownian_sse.observables import (
    ThermalSpec,
    boltzmann_distribution,
    distribution_stats,
    inverse_temperature,
    phonon_stats,
    physicality_report,
    thermal_energy,
    thermal_geometric,
)


def test_inverse_temperature_reproduces_occupation():
    w = 2 * np.pi
    for n_t in (0.1, 1.0, 7.5):
        beta = inverse_temperature(n_t, w)
        assert 1 / math.expm1(beta * w) == pytest.approx(n_t, rel=1e-12)
        assert thermal_energy(n_t) == pytest.approx(1 / (beta * w))
    with pytest.raises(ValueError):
        inverse_temperature(0.0, w)


def test_thermal_geometric_values():
    p = thermal_geometric(1.0, 30).populations
    np.testing.assert_allclose(p[:5], [0.5, 0.25, 0.125, 0.0625, 0.03125], rtol=1e-8)
    assert p @ np.arange(30) == pytest.approx(1.0, abs=1e-6)
    p = thermal_geometric(0.3, 40).populations
    assert p @ np.arange(40) == pytest.approx(0.3, rel=1e-9)


def test_thermal_geometric_edge_cases():
    p = thermal_geometric(0.0, 5).populations
    np.testing.assert_array_equal(p, [1, 0, 0, 0, 0])
    with pytest.raises(TruncationLeakageError):
        thermal_geometric(1.0, 10)
    with pytest.raises(ValueError):
        thermal_geometric(-1.0, 10)


@pytest.mark.parametrize("n_t", [0.2, 1.0, 3.0])
def test_boltzmann_harmonic_equals_geometric(n_t):
    dim = 120
    spec = ThermalSpec.harmonic(n_t)
    np.testing.assert_allclose(boltzmann_distribution(spec, dim),
                               thermal_geometric(n_t, dim).populations, atol=1e-13)


def test_boltzmann_kerr_second_moment():
    # direct sum: p_n ~ 2**(-n**2) at n_t = 1
    w = np.array([2.0 ** (-(n * n)) for n in range(12)])
    expected = float(np.arange(12) ** 2 @ w / w.sum())
    p = boltzmann_distribution(ThermalSpec.kerr(1.0), 20)
    assert p @ np.arange(20) ** 2 == pytest.approx(expected, rel=1e-12)
    assert 0.485 <= expected <= 0.495
    assert p[0] == pytest.approx(0.639, abs=5e-4)


def test_boltzmann_explicit_spectrum_and_leakage():
    spec = ThermalSpec(1.0, 2 * np.pi * (np.arange(4) + 0.5))
    with pytest.raises(TruncationLeakageError):
        boltzmann_distribution(spec, 4)
    with pytest.raises(ValueError):
        ThermalSpec(1.0, [0.0, 1.0]).level_energies(3)
    with pytest.raises(ValueError):
        ThermalSpec(0.0, [0.0])


def test_phonon_stats():
    rho = DensityMatrix(FockSpace(3), np.diag([0.5, 0.25, 0.25]))
    s = phonon_stats(rho)
    assert (s.mean_n, s.mean_n2) == pytest.approx((0.75, 1.25))
    assert distribution_stats([0.5, 0.25, 0.25]).mean_n2 == pytest.approx(1.25)


def test_physicality_report_flags_negative_eigenvalue():
    m = np.array([[1.1, 0.0], [0.0, -0.1]])
    r = physicality_report(m)
    assert r.min_eigenvalue == pytest.approx(-0.1)
    assert r.trace_error == pytest.approx(0.0, abs=1e-15)
    assert r.hermiticity_error == 0.0
    r = physicality_report(DensityMatrix(FockSpace(2), np.diag([0.5, 0.5])))
    assert r.purity == pytest.approx(0.5)
