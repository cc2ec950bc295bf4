"""Brownian-motion master equations and a fixed-step RK4 integrator.

All variants share the structure

    drho/dt = -i[H, rho] - i G [x, {p, rho}] - X [x, [x, rho]]
              + Z [x, [p, rho]] - D [p, [p, rho]]

with (G, X, Z, D) constant for the low-temperature (LBME), standard (SBME)
and completely positive (PBME) variants, and caller-supplied functions of
time for the general form. The generator is evaluated as ``Y + Y^dag`` with

    Y = K rho + x rho M + D p rho p,
    K = -i H - i G x p - X x^2 + Z x p - D p^2,
    M = X x - (i G + Z) p,

which needs three matrix products per call (five with position diffusion)
and keeps the result exactly Hermitian.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import (
    DimensionMismatchError,
    IntegrationDivergedError,
    NoConvergenceError,
    TruncationLeakageError,
    UnsupportedVariantError,
)
from .fock import DensityMatrix, FockSpace, Operator, quadratures
from .observables import thermal_energy

#: Top-level population above which an integration is declared leaky.
TOP_LEVEL_THRESHOLD = 1e-4
TRACE_DRIFT_THRESHOLD = 1e-6
STATIONARY_RESIDUAL = 1e-8


class Variant(enum.Enum):
    GENERAL = "general"
    LBME = "lbme"
    SBME = "sbme"
    PBME = "pbme"


@dataclass(frozen=True)
class BmeCoefficients:
    """Time-dependent coefficients ``Gamma(t)``, ``xi(t)``, ``zeta(t)``."""

    gamma_fn: Callable[[float], float]
    xi_fn: Callable[[float], float]
    zeta_fn: Callable[[float], float]

    @classmethod
    def constant(cls, gamma: float, xi: float, zeta: float = 0.0) -> "BmeCoefficients":
        return cls(lambda t: gamma, lambda t: xi, lambda t: zeta)


@dataclass(frozen=True)
class MeModel:
    """A master-equation variant with its physical parameters.

    ``coefficients`` is only used by the general variant. For SBME the
    high-temperature factor ``k_B T / (hbar omega)`` is derived from ``n_t``.
    """

    variant: Variant
    hamiltonian: Operator
    gamma: float = 0.0
    n_t: float = 0.0
    coefficients: Optional[BmeCoefficients] = None
    kT_over_omega: float = field(init=False, default=math.nan)

    def __post_init__(self):
        variant = Variant(self.variant)
        object.__setattr__(self, "variant", variant)
        if self.gamma < 0 or self.n_t < 0:
            raise ValueError("gamma and n_t must be non-negative")
        if variant is Variant.SBME:
            if self.n_t == 0:
                raise UnsupportedVariantError(
                    "SBME needs n_t > 0: its high-temperature coefficient kT/(hbar omega) "
                    "diverges at zero temperature"
                )
            object.__setattr__(self, "kT_over_omega", thermal_energy(self.n_t))
        if variant is Variant.GENERAL and self.coefficients is None:
            raise ValueError("general BME needs BmeCoefficients")

    @property
    def space(self):
        return self.hamiltonian.space

    def rates(self, t: float = 0.0) -> tuple[float, float, float, float]:
        """``(Gamma, xi, zeta, D)`` at time ``t``."""
        g, n = self.gamma, self.n_t
        if self.variant is Variant.LBME:
            return g / 4, g / 4 * (2 * n + 1), 0.0, 0.0
        if self.variant is Variant.SBME:
            return g / 4, g * self.kT_over_omega / 2, 0.0, 0.0
        if self.variant is Variant.PBME:
            return g / 4, g / 4 * (2 * n + 1), 0.0, g / (16 * (2 * n + 1))
        c = self.coefficients
        return float(c.gamma_fn(t)), float(c.xi_fn(t)), float(c.zeta_fn(t)), 0.0


class _Generator:
    """Precomputed operators for one (H, space) pair."""

    def __init__(self, hamiltonian: Operator):
        x, p = quadratures(hamiltonian.space)
        self.h = hamiltonian.matrix
        self.x = x.matrix
        self.p = p.matrix
        self.xx = self.x @ self.x
        self.pp = self.p @ self.p
        self.xp = self.x @ self.p

    def operators(self, gamma, xi, zeta, diff):
        k = -1j * self.h + (zeta - 1j * gamma) * self.xp - xi * self.xx - diff * self.pp
        m = xi * self.x - (1j * gamma + zeta) * self.p
        return k, m, diff

    def half(self, rho, k, m, diff):
        y = k @ rho + (self.x @ rho) @ m
        if diff:
            y += diff * ((self.p @ rho) @ self.p)
        return y

    def apply(self, rho, k, m, diff):
        # valid for Hermitian rho only
        y = self.half(rho, k, m, diff)
        return y + y.conj().T

    def apply_linear(self, rho, k, m, diff):
        """Complex-linear extension of the generator to any matrix."""
        return self.half(rho, k, m, diff) + self.half(rho.conj().T, k, m, diff).conj().T

    def __call__(self, rho, gamma, xi, zeta, diff):
        return self.apply(rho, *self.operators(gamma, xi, zeta, diff))


@functools.lru_cache(maxsize=32)
def _generator(hamiltonian: Operator) -> _Generator:
    # Operator hashes by identity, so this caches per Hamiltonian object
    return _Generator(hamiltonian)


def _matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)


def _check_dim(rho: np.ndarray, hamiltonian: Operator):
    d = hamiltonian.space.dim
    if rho.shape != (d, d):
        raise DimensionMismatchError(f"rho shape {rho.shape} does not match dim {d}")


def bme_rhs(rho, model: MeModel, t: float = 0.0) -> np.ndarray:
    """Time derivative of ``rho`` under ``model`` (any variant)."""
    m = _matrix(rho)
    _check_dim(m, model.hamiltonian)
    gamma, xi, zeta, diff = model.rates(t)
    return _generator(model.hamiltonian)(m, gamma, xi, zeta, diff)


def lbme_rhs(rho, model: MeModel) -> np.ndarray:
    if model.variant is not Variant.LBME:
        raise UnsupportedVariantError(f"expected an LBME model, got {model.variant.value}")
    return bme_rhs(rho, model)


def sbme_rhs(rho, model: MeModel) -> np.ndarray:
    if model.variant is not Variant.SBME:
        raise UnsupportedVariantError(f"expected an SBME model, got {model.variant.value}")
    return bme_rhs(rho, model)


def pbme_rhs(rho, model: MeModel) -> np.ndarray:
    if model.variant is not Variant.PBME:
        raise UnsupportedVariantError(f"expected a PBME model, got {model.variant.value}")
    return bme_rhs(rho, model)


def general_bme_rhs(rho, coeffs: BmeCoefficients, hamiltonian: Operator, t: float) -> np.ndarray:
    m = _matrix(rho)
    _check_dim(m, hamiltonian)
    return _generator(hamiltonian)(
        m, float(coeffs.gamma_fn(t)), float(coeffs.xi_fn(t)), float(coeffs.zeta_fn(t)), 0.0
    )


def make_rhs(model: MeModel) -> Callable[[float, np.ndarray], np.ndarray]:
    """Return ``f(t, rho) -> drho/dt`` for :func:`evolve`."""
    gen = _generator(model.hamiltonian)
    if model.variant is Variant.GENERAL:
        def rhs(t, rho):
            return gen(rho, *model.rates(t))
    else:
        ops = gen.operators(*model.rates())

        def rhs(t, rho):
            return gen.apply(rho, *ops)
    return rhs


def trace_norm(m: np.ndarray) -> float:
    """Trace norm of a Hermitian matrix."""
    return float(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T))).sum())


def rk4_step(rhs, t, y, dt):
    k1 = rhs(t, y)
    k2 = rhs(t + dt / 2, y + (dt / 2) * k1)
    k3 = rhs(t + dt / 2, y + (dt / 2) * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _guard(rho: np.ndarray, t: float):
    tr = np.trace(rho).real
    if not np.isfinite(tr) or abs(tr - 1.0) > TRACE_DRIFT_THRESHOLD:
        raise IntegrationDivergedError(f"trace drifted to {tr!r} at t={t:.6g}")
    top = rho[-1, -1].real
    if top > TOP_LEVEL_THRESHOLD:
        raise TruncationLeakageError(
            f"top-level population {top:.3g} exceeds {TOP_LEVEL_THRESHOLD:g} at t={t:.6g}"
        )


def evolve(
    rho0,
    rhs: Callable[[float, np.ndarray], np.ndarray],
    dt: float,
    t_final: float,
    observer: Optional[Callable[[float, np.ndarray], None]] = None,
    record_every: int = 1,
    t0: float = 0.0,
) -> DensityMatrix:
    """Integrate ``drho/dt = rhs(t, rho)`` with classical RK4 at fixed ``dt``.

    ``rho`` is re-symmetrized after every step. The observer sees
    ``(t, rho)`` at ``t0`` and then every ``record_every`` steps (and at the
    final time); the array it receives must not be mutated.

    Raises
    ------
    IntegrationDivergedError
        If ``|Tr rho - 1|`` exceeds ``1e-6``.
    TruncationLeakageError
        If the top Fock level holds more than ``1e-4`` population.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_final < dt:
        raise ValueError("t_final must be at least one step")
    rho = np.array(_matrix(rho0), dtype=complex)
    space = rho0.space if isinstance(rho0, DensityMatrix) else None
    n_steps = int(round(t_final / dt))
    if observer is not None:
        observer(t0, rho)
    t = t0
    for i in range(1, n_steps + 1):
        rho = rk4_step(rhs, t, rho, dt)
        rho = 0.5 * (rho + rho.conj().T)
        t = t0 + i * dt
        _guard(rho, t)
        if observer is not None and (i % record_every == 0 or i == n_steps):
            observer(t, rho)
    return _as_density(rho, space)


def _as_density(rho: np.ndarray, space=None) -> DensityMatrix:
    rho = rho / np.trace(rho).real
    return DensityMatrix(space or FockSpace(rho.shape[0]), 0.5 * (rho + rho.conj().T))


class SteadyState(NamedTuple):
    rho: DensityMatrix
    time: float
    residual: float


def steady_state(
    model: MeModel,
    rho0,
    dt: float = 1e-4,
    tol: float = 1e-8,
    t_max: float = 200.0,
    check_every: float = 0.05,
) -> SteadyState:
    """Evolve until the trace norm of ``drho/dt`` drops below ``tol``.

    Returns the state, the time at which convergence was detected and the
    final residual.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rhs = make_rhs(model)
    rho = np.array(_matrix(rho0), dtype=complex)
    space = model.space
    stride = max(1, int(round(check_every / dt)))
    t = 0.0
    step = 0
    while True:
        residual = trace_norm(rhs(t, rho))
        if residual < tol:
            return SteadyState(_as_density(rho, space), t, residual)
        if t >= t_max:
            raise NoConvergenceError(
                f"no steady state within t_max={t_max:g} (residual {residual:.3g} > {tol:g})"
            )
        for _ in range(stride):
            rho = rk4_step(rhs, t, rho, dt)
            rho = 0.5 * (rho + rho.conj().T)
            step += 1
            t = step * dt
        _guard(rho, t)


def stationary_state(model: MeModel, t: float = 0.0) -> SteadyState:
    """Null vector of the generator, found by a direct linear solve.

    The generator is assembled as a ``dim**2`` superoperator and the
    equation ``L rho = 0`` is solved together with ``Tr rho = 1``.
    Practical up to ``dim`` of about 50. ``time`` in the result is ``nan``;
    ``residual`` is the trace norm of ``drho/dt``.

    Raises
    ------
    NoConvergenceError
        If the residual exceeds ``1e-8``, which signals an ill-conditioned
        solve.
    """
    gen = _generator(model.hamiltonian)
    ops = gen.operators(*model.rates(t))
    d = model.space.dim
    cols = np.empty((d * d, d * d), dtype=complex)
    basis = np.zeros((d, d), dtype=complex)
    for j in range(d * d):
        basis.flat[j] = 1.0
        cols[:, j] = gen.apply_linear(basis, *ops).ravel()
        basis.flat[j] = 0.0
    # L is singular with a one-dimensional null space; swapping the (0, 0)
    # equation for the trace condition makes the system regular
    cols[0] = np.eye(d).ravel()
    b = np.zeros(d * d, dtype=complex)
    b[0] = 1.0
    vec = np.linalg.solve(cols, b)
    rho = _as_density(vec.reshape(d, d), model.space)
    residual = trace_norm(gen.apply(rho.matrix, *ops))
    if not residual < STATIONARY_RESIDUAL:
        raise NoConvergenceError(f"stationary solve residual {residual:.3g} exceeds {STATIONARY_RESIDUAL:g}")
    return SteadyState(rho, math.nan, residual)
