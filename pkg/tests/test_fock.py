import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brownian_sse.errors import DimensionMismatchError, InvalidDimensionError, TruncationLeakageError
from brownian_sse.fock import (
    DensityMatrix,
    FockSpace,
    Operator,
    PureState,
    annihilation,
    coherent_state,
    creation,
    density_expectation,
    expectation,
    fock_state,
    harmonic_hamiltonian,
    identity,
    kerr_hamiltonian,
    moments,
    number,
    pure_to_density,
    quadratures,
)

from conftest import random_state


def test_space_rejects_small_or_fractional_dims():
    with pytest.raises(InvalidDimensionError):
        FockSpace(1)
    with pytest.raises(InvalidDimensionError):
        FockSpace(2.5)
    assert FockSpace(3.0).dim == 3


def test_ladder_action_on_number_states():
    sp = FockSpace(8)
    a = annihilation(sp).matrix
    for n in range(1, 8):
        e = np.zeros(8)
        e[n - 1] = math.sqrt(n)
        np.testing.assert_allclose(a @ fock_state(sp, n).amplitudes, e)
    np.testing.assert_allclose(creation(sp).matrix, a.T)


def test_commutators_hold_below_the_cutoff():
    sp = FockSpace(10)
    a, ad = annihilation(sp).matrix, creation(sp).matrix
    comm = a @ ad - ad @ a
    np.testing.assert_allclose(np.diag(comm)[:-1], 1.0)
    assert comm[-1, -1] == pytest.approx(-9.0)
    x, p = (q.matrix for q in quadratures(sp))
    xp = x @ p - p @ x
    np.testing.assert_allclose(xp[:-1, :-1], 1j * np.eye(9), atol=1e-14)


def test_number_operator_is_a_dag_a():
    sp = FockSpace(6)
    a = annihilation(sp)
    np.testing.assert_allclose((a.dag() @ a).matrix, number(sp).matrix)


def test_hamiltonian_spectra():
    sp = FockSpace(5)
    w = 2 * np.pi
    np.testing.assert_allclose(np.diag(harmonic_hamiltonian(sp, w).matrix).real, w * (np.arange(5) + 0.5))
    np.testing.assert_allclose(np.diag(kerr_hamiltonian(sp, w).matrix).real, w * np.arange(5) ** 2)
    assert kerr_hamiltonian(sp, w).is_diagonal
    with pytest.raises(ValueError):
        harmonic_hamiltonian(sp, 0.0)


def test_operator_validation_and_algebra():
    sp = FockSpace(3)
    with pytest.raises(DimensionMismatchError):
        Operator(sp, np.eye(4))
    with pytest.raises(ValueError):
        Operator(sp, np.triu(np.ones((3, 3))), hermitian=True)
    h = identity(sp) * 2.0
    assert h.hermitian
    assert not (h * 1j).hermitian
    with pytest.raises(DimensionMismatchError):
        identity(sp) @ identity(FockSpace(4))
    assert (identity(sp) - identity(sp)).hermitian


def test_fock_state_bounds():
    sp = FockSpace(4)
    with pytest.raises(IndexError):
        fock_state(sp, 4)
    with pytest.raises(IndexError):
        fock_state(sp, -1)


def test_state_and_density_validation():
    sp = FockSpace(3)
    with pytest.raises(ValueError):
        PureState(sp, [1.0, 1.0, 0.0])
    assert PureState(sp, [1.0, 1.0, 0.0], normalized=False).normalize().norm == pytest.approx(1.0)
    with pytest.raises(DimensionMismatchError):
        PureState(sp, [1.0, 0.0])
    with pytest.raises(ValueError):
        DensityMatrix(sp, np.diag([0.5, 0.6, 0.0]))
    with pytest.raises(ValueError):
        DensityMatrix(sp, np.array([[0.5, 0.1, 0], [0.2, 0.5, 0], [0, 0, 0]]))


@pytest.mark.parametrize("alpha", [0.0, 1.0, 0.7 - 1.3j, 2.5j])
def test_coherent_state_is_eigenstate_with_minimum_uncertainty(alpha):
    sp = FockSpace(40)
    psi = coherent_state(sp, alpha)
    av = annihilation(sp).matrix @ psi.amplitudes
    np.testing.assert_allclose(av[:-1], alpha * psi.amplitudes[:-1], atol=1e-10)
    m = moments(psi)
    assert m.mean_x == pytest.approx(math.sqrt(2) * complex(alpha).real, abs=1e-10)
    assert m.mean_p == pytest.approx(math.sqrt(2) * complex(alpha).imag, abs=1e-10)
    assert (m.var_x, m.var_p, m.cov_xp) == pytest.approx((0.5, 0.5, 0.0), abs=1e-10)
    assert m.uncertainty_product == pytest.approx(0.25, abs=1e-10)


def test_coherent_state_refuses_leaky_truncation():
    with pytest.raises(TruncationLeakageError):
        coherent_state(FockSpace(10), 2.0)


def test_coherent_state_large_amplitude_does_not_overflow():
    psi = coherent_state(FockSpace(400), 12.0)
    assert np.all(np.isfinite(psi.amplitudes))
    assert moments(psi).mean_x == pytest.approx(12 * math.sqrt(2), rel=1e-9)


@pytest.mark.parametrize("n", [0, 1, 4])
def test_number_state_moments(n):
    m = moments(fock_state(FockSpace(10), n))
    assert m.as_tuple() == pytest.approx((0, 0, n + 0.5, n + 0.5, 0), abs=1e-12)


def test_expectation_keeps_imaginary_part():
    sp = FockSpace(6)
    psi = coherent_state(sp, 0.3j)
    val = expectation(annihilation(sp), psi)
    assert val.imag == pytest.approx(0.3, abs=1e-6)
    rho = pure_to_density(psi)
    assert density_expectation(annihilation(sp), rho) == pytest.approx(val, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_uncertainty_relation_for_random_states(seed):
    psi = random_state(np.random.default_rng(seed), 12, support=8)
    assert moments(psi).uncertainty_product >= 0.25 - 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_moments_match_density_matrix_traces(seed):
    psi = random_state(np.random.default_rng(seed), 10, support=6)
    rho = pure_to_density(psi)
    x, p = quadratures(psi.space)
    m = moments(psi)
    assert density_expectation(x, rho).real == pytest.approx(m.mean_x, abs=1e-12)
    assert density_expectation(p @ p, rho).real - m.mean_p**2 == pytest.approx(m.var_p, abs=1e-12)
    sym = 0.5 * (density_expectation(x @ p, rho) + density_expectation(p @ x, rho)).real
    assert sym - m.mean_x * m.mean_p == pytest.approx(m.cov_xp, abs=1e-12)
    assert rho.purity == pytest.approx(1.0)
