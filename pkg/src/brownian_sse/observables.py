"""Thermal reference states, phonon statistics and physicality diagnostics.

Temperature is always given as the thermal occupation ``n_t`` of a
harmonic mode at ``omega``. The inverse temperature follows from
``beta * omega = ln(1 + 1/n_t)``, so that a harmonic spectrum reproduces
the geometric (Bose-Einstein) distribution exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import TruncationLeakageError
from .fock import LEAKAGE_THRESHOLD, DensityMatrix, FockSpace

Spectrum = Union[Sequence[float], np.ndarray, Callable[[np.ndarray], np.ndarray]]

# levels beyond the cutoff used to estimate the discarded tail
_TAIL_LEVELS = 400


def inverse_temperature(n_t: float, omega: float) -> float:
    """``beta`` with ``hbar = k_B = 1`` from the thermal occupation."""
    if n_t <= 0:
        raise ValueError("n_t must be positive for a finite temperature")
    return float(np.log1p(1.0 / n_t) / omega)


def thermal_energy(n_t: float) -> float:
    """``k_B T / (hbar omega)`` from the thermal occupation."""
    if n_t <= 0:
        raise ValueError("n_t must be positive for a finite temperature")
    return float(1.0 / np.log1p(1.0 / n_t))


@dataclass(frozen=True)
class ThermalSpec:
    """Temperature (via ``n_t``) and a spectrum ``E_n``.

    ``energies`` is either an array of level energies or a callable that maps
    an integer array of levels to energies. A callable lets the Boltzmann
    tail beyond the truncation be measured rather than guessed.
    """

    n_t: float
    energies: Spectrum
    omega: float = 2 * np.pi

    def __post_init__(self):
        if self.n_t <= 0:
            raise ValueError("ThermalSpec needs n_t > 0")

    @classmethod
    def harmonic(cls, n_t: float, omega: float = 2 * np.pi) -> "ThermalSpec":
        return cls(n_t, lambda n: omega * (np.asarray(n) + 0.5), omega)

    @classmethod
    def kerr(cls, n_t: float, omega: float = 2 * np.pi) -> "ThermalSpec":
        return cls(n_t, lambda n: omega * np.asarray(n, dtype=float) ** 2, omega)

    def level_energies(self, count: int) -> np.ndarray:
        if callable(self.energies):
            return np.asarray(self.energies(np.arange(count)), dtype=float)
        e = np.asarray(self.energies, dtype=float)
        if e.size < count:
            raise ValueError(f"spectrum has {e.size} levels, {count} requested")
        return e[:count]


def thermal_geometric(n_t: float, dim: int) -> DensityMatrix:
    """Geometric thermal state ``p_n = n_t**n / (n_t + 1)**(n + 1)``.

    Truncated at ``dim`` and renormalized; refuses if the discarded weight
    ``(n_t / (n_t + 1))**dim`` exceeds the leakage threshold.
    """
    if n_t < 0:
        raise ValueError("n_t must be non-negative")
    space = FockSpace(dim)
    if n_t == 0:
        p = np.zeros(dim)
        p[0] = 1.0
    else:
        q = n_t / (n_t + 1.0)
        tail = q**dim
        if tail > LEAKAGE_THRESHOLD:
            raise TruncationLeakageError(
                f"thermal state n_t={n_t:g} leaks {tail:.3g} beyond dim={dim}"
            )
        p = q ** np.arange(dim)
        p /= p.sum()
    return DensityMatrix(space, np.diag(p).astype(complex))


def boltzmann_distribution(spec: ThermalSpec, dim: int) -> np.ndarray:
    """Boltzmann weights ``exp(-beta E_n)`` over the first ``dim`` levels."""
    beta = inverse_temperature(spec.n_t, spec.omega)
    if callable(spec.energies):
        e = spec.level_energies(dim + _TAIL_LEVELS)
    else:
        e = spec.level_energies(dim)
    # shift by the ground energy so the weights stay finite
    w = np.exp(-beta * (e - e.min()))
    total = w.sum()
    if callable(spec.energies):
        tail = w[dim:].sum() / total
    else:
        # no spectrum beyond the cutoff: the top level bounds the tail
        tail = w[-1] / total
    if tail > LEAKAGE_THRESHOLD:
        raise TruncationLeakageError(f"Boltzmann tail {tail:.3g} beyond dim={dim}")
    p = w[:dim]
    return p / p.sum()


@dataclass(frozen=True)
class PhononStats:
    mean_n: float
    mean_n2: float
    populations: np.ndarray


def phonon_stats(rho: DensityMatrix) -> PhononStats:
    """``Tr(rho n)``, ``Tr(rho n^2)`` and the diagonal of ``rho``."""
    pops = rho.populations
    n = np.arange(pops.size)
    return PhononStats(float(pops @ n), float(pops @ n**2), pops)


def distribution_stats(populations: np.ndarray) -> PhononStats:
    p = np.asarray(populations, dtype=float)
    n = np.arange(p.size)
    return PhononStats(float(p @ n), float(p @ n**2), p)


@dataclass(frozen=True)
class PhysicalityReport:
    min_eigenvalue: float
    trace_error: float
    hermiticity_error: float
    purity: float


def physicality_report(rho) -> PhysicalityReport:
    """Diagnostics for a (possibly unphysical) density matrix.

    Accepts a :class:`DensityMatrix` or a raw square array so that
    intermediate integrator states can be inspected without validation.
    """
    m = np.asarray(rho.matrix if isinstance(rho, DensityMatrix) else rho, dtype=complex)
    herm = 0.5 * (m + m.conj().T)
    return PhysicalityReport(
        min_eigenvalue=float(np.linalg.eigvalsh(herm)[0]),
        trace_error=float(abs(np.trace(m) - 1.0)),
        hermiticity_error=float(np.max(np.abs(m - m.conj().T))),
        purity=float(np.einsum("ij,ji->", m, m).real),
    )
