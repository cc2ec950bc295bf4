"""Stochastic Schrodinger equations for thermal damping and joint measurement.

Two unravellings are provided.

``joint``
    Continuous joint measurement of ``x`` and ``p`` at strength ``k``::

        d psi = -k [(x - <x>)^2 + (p - <p>)^2] psi dt
                + sqrt(2k) [(x - <x>) dW1 + (p - <p>) dW2] psi

``brownian``
    The joint measurement at ``k = gamma n_t / 2`` composed with Markovian
    feedback driven by the same record. The feedback steers the means so
    that ``d<x> = <-i[x, H]> dt`` and
    ``d<p> = <-i[p, H]> dt - (gamma/2) <p> dt + sqrt(gamma n_t) dW``, i.e. the
    classical Langevin equations of a Brownian particle, while every state
    collapses to a coherent state. Writing ``r = sqrt(gamma n_t)`` and, with
    the input state's moments, ::

        G1 = 2r [(C - 1/2) x - V_x p],     G2 = 2r [V_p x - C p],

    the increment is ``A psi dt + B1 psi dW1 + B2 psi dW2`` with ::

        B1 = r x - i G1,     B2 = r p - i G2,
        A  = -i H - (r^2/2)(x^2 + p^2) + 2 r^2 (<x> x + <p> p)
             - i (gamma/2) <p> x - (G1^2 + G2^2)/2 - i r (G1 x + G2 p).

    The last two groups of ``A`` are the Ito corrections of applying the
    feedback after the measurement. ``brownian-printed`` keeps the noise
    operators but uses the shorter drift
    ``-i H - (r^2/2)(x^2 - p^2) + 2 r^2 (<x> x + <p> p) + i (gamma/2) <p> x``.
    That drift does not reproduce the Langevin means and drives coherent
    states away from ``V = 1/2``; it is kept for comparison only.

All increments are Euler-Maruyama with the moments taken from the current
normalized state. The default ``split`` scheme applies the Hamiltonian
exactly, ``exp(-i H dt)``, after each stochastic increment; ``euler``
includes ``-i H psi dt`` in the increment itself.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from . import _kernels as K
from .errors import (
    DegenerateNormError,
    IntegrationDivergedError,
    TrajectoryError,
    TruncationLeakageError,
)
from .fock import FockSpace, Operator, PureState, quadratures

#: Top-level population above which a trajectory is declared leaky.
TOP_LEVEL_THRESHOLD = 1e-4
DEGENERATE_NORM = 1e-8

MODELS = {
    "brownian": K.MODEL_BROWNIAN,
    "brownian-printed": K.MODEL_BROWNIAN_PRINTED,
    "joint": K.MODEL_JOINT,
}
SCHEMES = ("split", "euler")
MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class SseParams:
    """Parameters of one SSE.

    For the Brownian models ``k`` is always ``gamma * n_t / 2``; passing a
    different value is an error. For the joint measurement ``k`` is free
    and ``gamma``, ``n_t`` are unused.

    ``refine_tol`` enables adaptive step refinement: when the expected
    increment norm ``h ||A psi|| + sqrt(h (||B1 psi||^2 + ||B2 psi||^2))``
    exceeds it, the step is split in two along the Brownian bridge,
    recursively up to ``max_refine`` levels. The decision depends only on
    the current state, never on the increment about to be applied, so the
    refined path is the same Brownian path resolved more finely and the
    statistics are unbiased. ``0`` disables refinement.
    """

    gamma: float
    n_t: float
    hamiltonian: Operator
    dt: float
    k: Optional[float] = None
    model: str = "brownian"
    scheme: str = "split"
    refine_tol: float = 0.1
    max_refine: int = 8

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {sorted(MODELS)}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if self.gamma < 0 or self.n_t < 0:
            raise ValueError("gamma and n_t must be non-negative")
        if not self.hamiltonian.hermitian:
            raise ValueError("the Hamiltonian must be flagged Hermitian")
        if self.refine_tol < 0:
            raise ValueError("refine_tol must be non-negative")
        if not 0 <= self.max_refine <= K.MAX_DEPTH:
            raise ValueError(f"max_refine must lie in 0..{K.MAX_DEPTH}")
        if self.model == "joint":
            if self.k is None or self.k < 0:
                raise ValueError("the joint measurement needs k >= 0")
        else:
            k = self.gamma * self.n_t / 2
            if self.k is None:
                object.__setattr__(self, "k", k)
            elif not math.isclose(self.k, k, rel_tol=1e-12, abs_tol=1e-15):
                raise ValueError(f"Brownian SSE requires k = gamma*n_t/2 = {k:g}, got {self.k:g}")
        object.__setattr__(self, "k", float(self.k))

    @classmethod
    def brownian(cls, gamma, n_t, hamiltonian, dt, **kw) -> "SseParams":
        return cls(gamma, n_t, hamiltonian, dt, **kw)

    @classmethod
    def joint_measurement(cls, k, hamiltonian, dt, **kw) -> "SseParams":
        return cls(0.0, 0.0, hamiltonian, dt, k=k, model="joint", **kw)

    @property
    def space(self) -> FockSpace:
        return self.hamiltonian.space


@dataclass(frozen=True)
class NoisePair:
    """Ito increments ``dW1``, ``dW2`` with variance ``dt`` each."""

    dw1: float
    dw2: float

    @classmethod
    def draw(cls, rng: np.random.Generator, dt: float) -> "NoisePair":
        z = rng.standard_normal(2) * math.sqrt(dt)
        return cls(float(z[0]), float(z[1]))

    @classmethod
    def zero(cls) -> "NoisePair":
        return cls(0.0, 0.0)


@dataclass(frozen=True)
class CovarianceState:
    var_x: float
    var_p: float
    cov_xp: float

    def as_array(self) -> np.ndarray:
        return np.array([self.var_x, self.var_p, self.cov_xp])

    @classmethod
    def from_array(cls, a) -> "CovarianceState":
        return cls(float(a[0]), float(a[1]), float(a[2]))


# ---------------------------------------------------------------------------
# dense reference implementation


@functools.lru_cache(maxsize=16)
def _quads(dim: int):
    x, p = quadratures(FockSpace(dim))
    return x.matrix, p.matrix


def _state_moments(v, x, p):
    xv, pv = x @ v, p @ v
    mx = np.vdot(v, xv).real
    mp = np.vdot(v, pv).real
    vx = np.vdot(xv, xv).real - mx * mx
    vp = np.vdot(pv, pv).real - mp * mp
    c = np.vdot(xv, pv).real - mx * mp
    return mx, mp, vx, vp, c


def increment_operators(state: PureState, params: SseParams, include_hamiltonian: bool = True):
    """Return the drift and noise operators ``(A, B1, B2)`` at ``state``.

    ``d psi = A psi dt + B1 psi dW1 + B2 psi dW2``. The operators depend on
    the state only through its moments.
    """
    params.space.check(state.space)
    x, p = _quads(state.space.dim)
    v = state.amplitudes
    mx, mp, vx, vp, c = _state_moments(v, x, p)
    eye = np.eye(state.space.dim)
    h = params.hamiltonian.matrix if include_hamiltonian else np.zeros_like(x)
    if params.model == "joint":
        k = params.k
        dx, dp = x - mx * eye, p - mp * eye
        a = -1j * h - k * (dx @ dx + dp @ dp)
        s = math.sqrt(2 * k)
        return a, s * dx, s * dp
    g, n = params.gamma, params.n_t
    r2 = g * n
    r = math.sqrt(r2)
    b1 = r * x + 2j * r * (vx * p - (c - 0.5) * x)
    b2 = r * p + 2j * r * (c * p - vp * x)
    xx, pp = x @ x, p @ p
    if params.model == "brownian-printed":
        a = (-1j * h - (r2 / 2) * (xx - pp)
             + 2 * g * (n * mx * x + n * mp * p + 0.25j * mp * x))
        return a, b1, b2
    g1 = 2 * r * ((c - 0.5) * x - vx * p)
    g2 = 2 * r * (vp * x - c * p)
    a = (-1j * h - (r2 / 2) * (xx + pp) + 2 * r2 * (mx * x + mp * p)
         - 0.5j * g * mp * x - 0.5 * (g1 @ g1 + g2 @ g2) - 1j * r * (g1 @ x + g2 @ p))
    return a, b1, b2


def _increment(state, params, noise, dt, include_hamiltonian=True) -> np.ndarray:
    a, b1, b2 = increment_operators(state, params, include_hamiltonian)
    v = state.amplitudes
    return (a @ v) * dt + (b1 @ v) * noise.dw1 + (b2 @ v) * noise.dw2


def brownian_sse_increment(state: PureState, params: SseParams, noise: NoisePair) -> np.ndarray:
    """Unnormalized increment ``d psi`` of the Brownian SSE over ``params.dt``.

    Includes ``-i H psi dt``. Uses the composed or printed drift according
    to ``params.model``.
    """
    if params.model == "joint":
        raise ValueError("use joint_measurement_increment for the joint-measurement model")
    return _increment(state, params, noise, params.dt)


def joint_measurement_increment(state: PureState, k: float, noise: NoisePair, dt: float) -> np.ndarray:
    """Increment of the joint ``x``/``p`` measurement SSE (no Hamiltonian)."""
    if k < 0:
        raise ValueError("k must be non-negative")
    x, p = _quads(state.space.dim)
    v = state.amplitudes
    mx, mp = np.vdot(v, x @ v).real, np.vdot(v, p @ v).real
    dxv = x @ v - mx * v
    dpv = p @ v - mp * v
    drift = -k * ((x @ dxv - mx * dxv) + (p @ dpv - mp * dpv))
    s = math.sqrt(2 * k)
    return drift * dt + s * (dxv * noise.dw1 + dpv * noise.dw2)


@functools.lru_cache(maxsize=16)
def _propagator(hamiltonian: Operator, dt: float) -> np.ndarray:
    return linalg.expm(-1j * dt * hamiltonian.matrix)


def sse_step(state: PureState, params: SseParams, noise: NoisePair) -> PureState:
    """One Euler-Maruyama step followed by renormalization.

    Raises
    ------
    DegenerateNormError
        If the stepped state's norm falls below ``1e-8``.
    TruncationLeakageError
        If the top Fock level ends up with more than ``1e-4`` population.
    """
    split = params.scheme == "split"
    inc = _increment(state, params, noise, params.dt, include_hamiltonian=not split)
    v = state.amplitudes + inc
    if split:
        v = _propagator(params.hamiltonian, params.dt) @ v
    nrm = np.linalg.norm(v)
    if not np.isfinite(nrm) or nrm < DEGENERATE_NORM:
        raise DegenerateNormError(f"state norm {nrm:.3g} after an SSE step")
    v = v / nrm
    top = abs(v[-1]) ** 2
    if top > TOP_LEVEL_THRESHOLD:
        raise TruncationLeakageError(
            f"top-level population {top:.3g} exceeds {TOP_LEVEL_THRESHOLD:g}"
        )
    return PureState(state.space, v)


# ---------------------------------------------------------------------------
# Gaussian moment equations


def covariance_ode_rhs(c: CovarianceState, k: float, omega: float) -> CovarianceState:
    """Covariance dynamics of a Gaussian state under joint measurement and
    harmonic motion at frequency ``omega``."""
    vx, vp, cxp = c.var_x, c.var_p, c.cov_xp
    return CovarianceState(
        -8 * k * vx**2 - 8 * k * cxp**2 + 2 * k + 2 * omega * cxp,
        -8 * k * vp**2 - 8 * k * cxp**2 + 2 * k - 2 * omega * cxp,
        -8 * k * (vx + vp) * cxp + omega * (vp - vx),
    )


def integrate_covariances(c0: CovarianceState, k: float, omega: float, dt: float,
                          n_steps: int) -> np.ndarray:
    """RK4 solution of :func:`covariance_ode_rhs`, shape ``(n_steps + 1, 3)``."""

    def f(y):
        return covariance_ode_rhs(CovarianceState.from_array(y), k, omega).as_array()

    out = np.empty((n_steps + 1, 3))
    y = c0.as_array()
    out[0] = y
    for i in range(1, n_steps + 1):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i] = y
    return out


# ---------------------------------------------------------------------------
# compiled batch propagation


def stream_key(seed: int, index: int) -> np.uint64:
    """Key of the noise stream for trajectory ``index`` under ``seed``."""
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must lie in [0, 2**64)")
    return np.uint64(K.stream_key(np.uint64(seed), np.uint64(index)))


def base_noise(seed: int, index: int, n_steps: int, dt: float, step0: int = 0) -> list[NoisePair]:
    """The unrefined Wiener increments a trajectory sees, step by step."""
    z = K.normal_pairs(stream_key(seed, index), np.int64(step0), n_steps, np.int64(0))
    s = math.sqrt(dt)
    return [NoisePair(float(a) * s, float(b) * s) for a, b in z]


_STATUS_ERRORS = {
    K.STATUS_LEAKAGE: (TruncationLeakageError, "top-level population exceeded 1e-4"),
    K.STATUS_DEGENERATE: (DegenerateNormError, "state norm fell below 1e-8"),
    K.STATUS_NONFINITE: (IntegrationDivergedError, "state became non-finite"),
}


class BatchPropagator:
    """Advances a batch of state vectors with the compiled kernel."""

    def __init__(self, params: SseParams):
        self.params = params
        h = params.hamiltonian
        d = h.space.dim
        self.dim = d
        self.euler = params.scheme == "euler"
        self.diag = h.is_diagonal
        self.hdiag = np.ascontiguousarray(np.diag(h.matrix).real)
        self.hmat = np.ascontiguousarray(h.matrix)
        depths = params.max_refine + 1
        steps = params.dt / 2.0 ** np.arange(depths)
        if self.diag:
            self.phase_tab = np.exp(-1j * steps[:, None] * self.hdiag[None, :])
            self.umat_tab = np.zeros((1, 1, 1), complex)
        else:
            self.phase_tab = np.zeros((1, 1), complex)
            self.umat_tab = np.stack([linalg.expm(-1j * s * h.matrix) for s in steps])
        self.model = MODELS[params.model]
        self.refine_tol = params.refine_tol

    def advance(self, psi, keys, step0, n_steps, status, fail_step, refinements):
        p = self.params
        K.advance(psi, keys, step0, n_steps, p.dt, self.model, p.gamma, p.n_t, p.k,
                  self.euler, self.diag, self.hdiag, self.hmat, self.phase_tab, self.umat_tab,
                  self.refine_tol, p.max_refine, TOP_LEVEL_THRESHOLD,
                  status, fail_step, refinements)
        step0 += n_steps

    def raise_failures(self, status, fail_step, index_offset=0):
        bad = np.flatnonzero(status)
        if bad.size == 0:
            return
        i = int(bad[0])
        cls, msg = _STATUS_ERRORS[int(status[i])]
        t = (int(fail_step[i]) + 1) * self.params.dt
        raise TrajectoryError(msg, index=index_offset + i, time=t, cause=cls(msg))


def batch_observables(psi: np.ndarray) -> dict:
    """Moments, ``<n>``, ``<n^2>`` and populations for each row of ``psi``."""
    d = psi.shape[1]
    sq = np.sqrt(np.arange(d))
    sq2 = np.sqrt(np.arange(d) * np.maximum(np.arange(d) - 1, 0))
    pops = psi.real**2 + psi.imag**2
    levels = np.arange(d)
    ea = np.einsum("ij,ij->i", psi[:, :-1].conj(), sq[1:] * psi[:, 1:])
    ea2 = np.einsum("ij,ij->i", psi[:, :-2].conj(), sq2[2:] * psi[:, 2:])
    en = pops @ levels
    occ1 = np.append(np.arange(1, d), 0.0)
    ean = pops @ occ1
    mx = math.sqrt(2) * ea.real
    mp = math.sqrt(2) * ea.imag
    return {
        "mean_n": en,
        "mean_n2": pops @ levels**2,
        "mean_x": mx,
        "mean_p": mp,
        "var_x": (2 * ea2.real + en + ean) / 2 - mx**2,
        "var_p": (-2 * ea2.real + en + ean) / 2 - mp**2,
        "cov_xp": ea2.imag - mx * mp,
        "populations": pops,
    }


SCALAR_OBSERVABLES = ("mean_n", "mean_n2", "mean_x", "mean_p", "var_x", "var_p", "cov_xp")


def stride_steps(record_stride: Optional[float], dt: float) -> int:
    if record_stride is None:
        return 1
    m = record_stride / dt
    steps = int(round(m))
    if steps < 1 or abs(m - steps) > 1e-6 * max(1.0, m):
        raise ValueError(f"record_stride {record_stride:g} is not a multiple of dt {dt:g}")
    return steps


@dataclass(frozen=True)
class TrajectoryResult:
    """Time series of one trajectory, sampled every ``record_stride``."""

    times: np.ndarray
    observables: dict
    populations: np.ndarray
    final_state: PureState
    refinements: int = 0
    moments: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.column_stack([self.observables[k] for k in
                             ("mean_x", "mean_p", "var_x", "var_p", "cov_xp")])
        object.__setattr__(self, "moments", m)

    @property
    def mean_n(self) -> np.ndarray:
        return self.observables["mean_n"]

    @property
    def mean_n2(self) -> np.ndarray:
        return self.observables["mean_n2"]


def simulate_trajectory(
    initial: PureState,
    params: SseParams,
    t_final: float,
    seed: int,
    record_stride: Optional[float] = None,
    index: int = 0,
) -> TrajectoryResult:
    """Integrate one trajectory and record observables every ``record_stride``.

    The noise is the stream keyed by ``(seed, index)``, so trajectory
    ``index`` of an ensemble with master seed ``seed`` is reproduced
    exactly.

    Raises
    ------
    TrajectoryError
        On leakage, a degenerate norm or a non-finite state; ``cause``
        holds the underlying error and ``time`` the failing step's end.
    """
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    params.space.check(initial.space)
    stride = stride_steps(record_stride, params.dt)
    n_steps = int(round(t_final / params.dt))
    n_rec = n_steps // stride
    prop = BatchPropagator(params)
    psi = np.array(initial.amplitudes / initial.norm, dtype=complex)[None, :].copy()
    keys = np.array([stream_key(seed, index)], dtype=np.uint64)
    step0 = np.zeros(1, np.int64)
    status = np.zeros(1, np.int64)
    fail = np.zeros(1, np.int64)
    refinements = np.zeros(1, np.int64)
    rows = [batch_observables(psi)]
    for _ in range(n_rec):
        prop.advance(psi, keys, step0, stride, status, fail, refinements)
        prop.raise_failures(status, fail, index_offset=index)
        rows.append(batch_observables(psi))
    obs = {k: np.array([r[k][0] for r in rows]) for k in SCALAR_OBSERVABLES}
    pops = np.array([r["populations"][0] for r in rows])
    times = np.arange(n_rec + 1) * stride * params.dt
    return TrajectoryResult(times, obs, pops, PureState(initial.space, psi[0]),
                            int(refinements[0]))
