"""Truncated Fock-space operators and states.

Everything lives in the number basis ``|0>, ..., |dim-1>`` with hbar = 1.
Operators are dense complex matrices; the dimensions used for a damped
oscillator at a few thermal phonons are small enough that sparse storage
buys nothing.

The quadratures are the dimensionless ones,

    x = (a + a^dag) / sqrt(2),    p = -i (a - a^dag) / sqrt(2),

so that ``[x, p] = i`` everywhere except the last row/column, where the
truncation corrupts the commutator. Experiments are expected to choose
``dim`` large enough that the top level is never populated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DimensionMismatchError, InvalidDimensionError, TruncationLeakageError

#: Maximum tail weight a state constructor may discard before refusing.
LEAKAGE_THRESHOLD = 1e-6

_HERMITIAN_ATOL = 1e-12


@dataclass(frozen=True)
class FockSpace:
    """Number basis truncated to ``dim`` levels."""

    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise InvalidDimensionError(f"Fock space needs dim >= 2, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.dim)

    def check(self, other: "FockSpace") -> None:
        if other.dim != self.dim:
            raise DimensionMismatchError(f"dimension mismatch: {self.dim} vs {other.dim}")


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense operator on a :class:`FockSpace`.

    ``hermitian`` is a promise made by the constructor; it is checked to
    ``1e-12`` entrywise.
    """

    space: FockSpace
    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = self.space.dim
        if m.shape != (d, d):
            raise DimensionMismatchError(f"operator shape {m.shape} does not match dim {d}")
        if self.hermitian and not np.allclose(m, m.conj().T, rtol=0, atol=_HERMITIAN_ATOL):
            raise ValueError("operator flagged Hermitian is not Hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T, self.hermitian)

    @property
    def is_diagonal(self) -> bool:
        m = self.matrix
        return not np.any(m - np.diag(np.diag(m)))

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self.space.check(other.space)
            return Operator(self.space, self.matrix @ other.matrix)
        if isinstance(other, PureState):
            self.space.check(other.space)
            return PureState(self.space, self.matrix @ other.amplitudes, normalized=False)
        return NotImplemented

    def __add__(self, other):
        if not isinstance(other, Operator):
            return NotImplemented
        self.space.check(other.space)
        return Operator(self.space, self.matrix + other.matrix, self.hermitian and other.hermitian)

    def __sub__(self, other):
        if not isinstance(other, Operator):
            return NotImplemented
        self.space.check(other.space)
        return Operator(self.space, self.matrix - other.matrix, self.hermitian and other.hermitian)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        keeps = self.hermitian and np.isreal(scalar)
        return Operator(self.space, self.matrix * scalar, bool(keeps))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class PureState:
    """State vector in the Fock basis."""

    space: FockSpace
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        v = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if v.shape != (self.space.dim,):
            raise DimensionMismatchError(
                f"state length {v.shape[0]} does not match dim {self.space.dim}"
            )
        if self.normalized and abs(np.vdot(v, v).real - 1.0) > 1e-10:
            raise ValueError("state flagged normalized has norm != 1")
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "PureState":
        return PureState(self.space, self.amplitudes / self.norm)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Density matrix; Hermitian and trace one to ``1e-10``."""

    space: FockSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = self.space.dim
        if m.shape != (d, d):
            raise DimensionMismatchError(f"density matrix shape {m.shape} does not match dim {d}")
        if not np.allclose(m, m.conj().T, rtol=0, atol=1e-10):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > 1e-10:
            raise ValueError(f"density matrix trace is {np.trace(m).real!r}, not 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def populations(self) -> np.ndarray:
        return np.diag(self.matrix).real.copy()

    @property
    def purity(self) -> float:
        m = self.matrix
        return float(np.einsum("ij,ji->", m, m).real)


@dataclass(frozen=True)
class Moments:
    """First and second quadrature moments of a state."""

    mean_x: float
    mean_p: float
    var_x: float
    var_p: float
    cov_xp: float

    def as_tuple(self):
        return (self.mean_x, self.mean_p, self.var_x, self.var_p, self.cov_xp)

    @property
    def uncertainty_product(self) -> float:
        """Determinant ``V_x V_p - C_xp**2``; at least 1/4 for any state."""
        return self.var_x * self.var_p - self.cov_xp**2


def make_space(dim: int) -> FockSpace:
    return FockSpace(dim)


def annihilation(space: FockSpace) -> Operator:
    """Lowering operator with ``a[n-1, n] = sqrt(n)``."""
    return Operator(space, np.diag(np.sqrt(np.arange(1, space.dim, dtype=float)), 1))


def creation(space: FockSpace) -> Operator:
    return annihilation(space).dag()


def number(space: FockSpace) -> Operator:
    return Operator(space, np.diag(space.levels.astype(float)), hermitian=True)


def identity(space: FockSpace) -> Operator:
    return Operator(space, np.eye(space.dim), hermitian=True)


def quadratures(space: FockSpace) -> tuple[Operator, Operator]:
    """Return ``(x, p)``."""
    a = annihilation(space).matrix
    ad = a.conj().T
    x = (a + ad) / np.sqrt(2.0)
    p = -1j * (a - ad) / np.sqrt(2.0)
    return Operator(space, x, hermitian=True), Operator(space, p, hermitian=True)


def harmonic_hamiltonian(space: FockSpace, omega: float) -> Operator:
    """``omega * (n + 1/2)``; the zero-point shift is a global phase."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    return Operator(space, np.diag(omega * (space.levels + 0.5)), hermitian=True)


def kerr_hamiltonian(space: FockSpace, omega: float) -> Operator:
    """Chi-3 oscillator ``omega * (a^dag a)**2``, spectrum ``omega * n**2``."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    return Operator(space, np.diag(omega * space.levels.astype(float) ** 2), hermitian=True)


def fock_state(space: FockSpace, n: int) -> PureState:
    if not 0 <= n < space.dim:
        raise IndexError(f"level {n} outside 0..{space.dim - 1}")
    v = np.zeros(space.dim, dtype=complex)
    v[n] = 1.0
    return PureState(space, v)


def coherent_state(space: FockSpace, alpha: complex) -> PureState:
    """Coherent state ``|alpha>`` truncated to ``space`` and renormalized.

    Raises
    ------
    TruncationLeakageError
        If the Poisson weight beyond the top level exceeds
        :data:`LEAKAGE_THRESHOLD`.
    """
    alpha = complex(alpha)
    mean_n = abs(alpha) ** 2
    n = space.levels
    if mean_n == 0.0:
        return fock_state(space, 0)
    tail = stats.poisson.sf(space.dim - 1, mean_n)
    if tail > LEAKAGE_THRESHOLD:
        raise TruncationLeakageError(
            f"coherent state |alpha|^2={mean_n:g} leaks {tail:.3g} beyond dim={space.dim}"
        )
    # log-space amplitudes avoid overflow of n! and alpha**n
    log_mag = n * np.log(abs(alpha)) - 0.5 * special.gammaln(n + 1) - 0.5 * mean_n
    amps = np.exp(log_mag) * np.exp(1j * np.angle(alpha) * n)
    return PureState(space, amps / np.linalg.norm(amps))


def expectation(op: Operator, state: PureState) -> complex:
    op.space.check(state.space)
    v = state.amplitudes
    return complex(np.vdot(v, op.matrix @ v))


def moments(state: PureState) -> Moments:
    """Means, variances and symmetrized covariance of ``x`` and ``p``."""
    x, p = quadratures(state.space)
    v = state.amplitudes
    xv = x.matrix @ v
    pv = p.matrix @ v
    mx = np.vdot(v, xv).real
    mp = np.vdot(v, pv).real
    # <x^2> = ||x v||^2 and <(xp+px)/2> = Re <x v | p v> for Hermitian x, p
    vx = np.vdot(xv, xv).real - mx * mx
    vp = np.vdot(pv, pv).real - mp * mp
    cxp = np.vdot(xv, pv).real - mx * mp
    return Moments(float(mx), float(mp), float(vx), float(vp), float(cxp))


def pure_to_density(state: PureState) -> DensityMatrix:
    v = state.amplitudes / state.norm
    return DensityMatrix(state.space, np.outer(v, v.conj()))


def density_expectation(op: Operator, rho: DensityMatrix) -> complex:
    op.space.check(rho.space)
    return complex(np.einsum("ij,ji->", op.matrix, rho.matrix))
