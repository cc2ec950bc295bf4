"""Monte Carlo ensembles of SSE trajectories.

Trajectories are processed in fixed chunks of ``chunk_size`` consecutive
indices. Each chunk produces partial sums; chunks are reduced in index
order. Because trajectory ``i`` always uses the noise stream keyed by
``(master_seed, i)`` and the chunk boundaries do not depend on the number
of workers, results are bit-identical for any ``workers`` setting.
``chunk_size`` fixes the floating-point summation order, so changing it
can move results in the last few bits.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatchError, InsufficientSamplesError
from .fock import DensityMatrix, PureState
from .sse import (
    SCALAR_OBSERVABLES,
    BatchPropagator,
    SseParams,
    batch_observables,
    stream_key,
    stride_steps,
)

#: Per-trajectory time averages kept for steady-state statistics.
TIME_AVERAGED = SCALAR_OBSERVABLES + ("mean_x2", "mean_p2")
MIN_STEADY_SAMPLES = 10


def default_burn_in(gamma: float) -> float:
    """Ten relaxation times of ``2 / gamma``."""
    if gamma <= 0:
        raise ValueError("burn-in default needs gamma > 0")
    return 20.0 / gamma


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything that determines an ensemble run.

    ``record_stride`` is the sampling interval of the time series and of
    the steady-state averages; it must be a multiple of ``params.dt``.
    ``workers`` affects scheduling only; ``chunk_size`` also sets the
    summation order of the partial sums.
    """

    params: SseParams
    initial: PureState
    n_traj: int
    t_final: float
    burn_in: float
    record_stride: float = 0.05
    master_seed: int = 0
    chunk_size: int = 200
    workers: int = 1

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError("n_traj must be at least 1")
        if not 0 <= self.burn_in < self.t_final:
            raise ValueError(f"burn_in ({self.burn_in:g}) must lie in [0, t_final={self.t_final:g})")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError("chunk_size and workers must be positive")
        self.params.space.check(self.initial.space)
        stride_steps(self.record_stride, self.params.dt)
        stream_key(self.master_seed, 0)

    @property
    def stride(self) -> int:
        return stride_steps(self.record_stride, self.params.dt)

    @property
    def n_records(self) -> int:
        return int(round(self.t_final / self.params.dt)) // self.stride

    @property
    def first_steady_record(self) -> int:
        # records strictly after the burn-in window
        return int(math.floor(self.burn_in / (self.stride * self.params.dt) + 1e-9)) + 1

    @property
    def steady_samples(self) -> int:
        return max(0, self.n_records - self.first_steady_record + 1)


@dataclass
class _Chunk:
    start: int
    sums: np.ndarray
    sumsq: np.ndarray
    traj_averages: np.ndarray
    traj_populations: np.ndarray
    rho_sum: np.ndarray
    rho_sq_re: np.ndarray
    rho_sq_im: np.ndarray
    refinements: int


def _run_chunk(config: EnsembleConfig, start: int, stop: int) -> _Chunk:
    n = stop - start
    d = config.params.space.dim
    prop = BatchPropagator(config.params)
    psi = np.tile(config.initial.amplitudes / config.initial.norm, (n, 1)).astype(complex)
    keys = np.array([stream_key(config.master_seed, i) for i in range(start, stop)], np.uint64)
    step0 = np.zeros(n, np.int64)
    status = np.zeros(n, np.int64)
    fail = np.zeros(n, np.int64)
    refinements = np.zeros(n, np.int64)

    n_rec = config.n_records
    n_obs = len(SCALAR_OBSERVABLES)
    sums = np.zeros((n_rec + 1, n_obs))
    sumsq = np.zeros((n_rec + 1, n_obs))
    averages = np.zeros((n, len(TIME_AVERAGED)))
    pops = np.zeros((n, d))
    rho = np.zeros((n, d, d), complex)
    first = config.first_steady_record

    for r in range(n_rec + 1):
        if r:
            prop.advance(psi, keys, step0, config.stride, status, fail, refinements)
            prop.raise_failures(status, fail, index_offset=start)
        obs = batch_observables(psi)
        table = np.column_stack([obs[k] for k in SCALAR_OBSERVABLES])
        sums[r] = table.sum(axis=0)
        sumsq[r] = (table**2).sum(axis=0)
        if r >= first:
            averages[:, :n_obs] += table
            averages[:, n_obs] += obs["mean_x"] ** 2
            averages[:, n_obs + 1] += obs["mean_p"] ** 2
            pops += obs["populations"]
            rho += psi[:, :, None] * psi[:, None, :].conj()

    samples = config.steady_samples
    if samples:
        averages /= samples
        pops /= samples
        rho /= samples
    return _Chunk(
        start=start,
        sums=sums,
        sumsq=sumsq,
        traj_averages=averages,
        traj_populations=pops,
        rho_sum=rho.sum(axis=0),
        rho_sq_re=(rho.real**2).sum(axis=0),
        rho_sq_im=(rho.imag**2).sum(axis=0),
        refinements=int(refinements.sum()),
    )


def _standard_error(total, total_sq, n):
    if n < 2:
        return np.full_like(total, np.nan, dtype=float)
    mean = total / n
    var = np.maximum(total_sq - n * mean**2, 0.0) / (n - 1)
    return np.sqrt(var / n)


@dataclass(frozen=True)
class EnsembleResult:
    """Ensemble time series and steady-state accumulations.

    ``mean_observables`` and ``std_errors`` map each of ``mean_n``,
    ``mean_n2``, ``mean_x``, ``mean_p``, ``var_x``, ``var_p``, ``cov_xp`` to
    an array over ``time_grid``. ``rho_ss`` averages ``|psi><psi|`` over
    trajectories and over post-burn-in records; ``rho_ss_stderr`` holds
    the across-trajectory standard errors of its real and imaginary parts.
    """

    config: EnsembleConfig
    time_grid: np.ndarray
    mean_observables: dict
    std_errors: dict
    rho_ss: Optional[DensityMatrix]
    rho_ss_stderr: Optional[tuple]
    populations_ss: Optional[np.ndarray]
    trajectory_averages: dict = field(repr=False)
    trajectory_populations: np.ndarray = field(repr=False)
    refinements: int = 0

    @property
    def n_traj(self) -> int:
        return self.config.n_traj


def run_ensemble(config: EnsembleConfig) -> EnsembleResult:
    """Run ``config.n_traj`` trajectories and aggregate them.

    Raises
    ------
    TrajectoryError
        If any trajectory fails; the error names the trajectory index and
        time, and no partial result is returned.
    """
    bounds = [(s, min(s + config.chunk_size, config.n_traj))
              for s in range(0, config.n_traj, config.chunk_size)]
    if config.workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_run_chunk, [config] * len(bounds),
                                   [b[0] for b in bounds], [b[1] for b in bounds]))
    else:
        chunks = [_run_chunk(config, a, b) for a, b in bounds]
    return _reduce(config, chunks)


def _reduce(config: EnsembleConfig, chunks: Sequence[_Chunk]) -> EnsembleResult:
    n = config.n_traj
    sums = chunks[0].sums.copy()
    sumsq = chunks[0].sumsq.copy()
    rho_sum = chunks[0].rho_sum.copy()
    sq_re = chunks[0].rho_sq_re.copy()
    sq_im = chunks[0].rho_sq_im.copy()
    for c in chunks[1:]:
        sums += c.sums
        sumsq += c.sumsq
        rho_sum += c.rho_sum
        sq_re += c.rho_sq_re
        sq_im += c.rho_sq_im
    means = sums / n
    errs = _standard_error(sums, sumsq, n)
    mean_obs = {k: means[:, j] for j, k in enumerate(SCALAR_OBSERVABLES)}
    std_errs = {k: errs[:, j] for j, k in enumerate(SCALAR_OBSERVABLES)}
    averages = np.concatenate([c.traj_averages for c in chunks])
    traj_pops = np.concatenate([c.traj_populations for c in chunks])
    times = np.arange(config.n_records + 1) * config.stride * config.params.dt

    rho_ss = stderr = pops_ss = None
    if config.steady_samples:
        rho = rho_sum / n
        rho = 0.5 * (rho + rho.conj().T)
        rho = rho / np.trace(rho).real
        rho_ss = DensityMatrix(config.params.space, rho)
        stderr = (_standard_error(rho_sum.real, sq_re, n), _standard_error(rho_sum.imag, sq_im, n))
        pops_ss = rho_ss.populations
    return EnsembleResult(
        config=config,
        time_grid=times,
        mean_observables=mean_obs,
        std_errors=std_errs,
        rho_ss=rho_ss,
        rho_ss_stderr=stderr,
        populations_ss=pops_ss,
        trajectory_averages={k: averages[:, j] for j, k in enumerate(TIME_AVERAGED)},
        trajectory_populations=traj_pops,
        refinements=sum(c.refinements for c in chunks),
    )


def reconstruct_density(states: Sequence[PureState]) -> DensityMatrix:
    """Equal-weight mixture ``(1/N) sum_j |psi_j><psi_j|``."""
    states = list(states)
    if not states:
        raise ValueError("need at least one state")
    space = states[0].space
    for s in states[1:]:
        if s.space.dim != space.dim:
            raise DimensionMismatchError(f"dimension mismatch: {space.dim} vs {s.space.dim}")
    v = np.array([s.amplitudes / s.norm for s in states])
    rho = v.T @ v.conj() / len(states)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(space, rho / np.trace(rho).real)


@dataclass(frozen=True)
class SteadyStats:
    """Post-burn-in averages with batch-means standard errors.

    ``variances_of_means`` is ``(Var <x>, Var <p>)``: the spread of the
    conditional means over time and trajectories.
    """

    mean_n: float
    mean_n2: float
    populations: np.ndarray
    variances_of_means: tuple
    std_errors: dict
    n_traj: int
    samples_per_trajectory: int


def steady_statistics(result: EnsembleResult) -> SteadyStats:
    """Steady-state statistics from per-trajectory time averages.

    Each trajectory contributes one number per statistic (its time average
    after burn-in). Standard errors are the spread of those numbers over
    ``sqrt(n_traj)``; they are ``nan`` for a single trajectory.

    Raises
    ------
    InsufficientSamplesError
        If fewer than 10 records fall after the burn-in.
    """
    samples = result.config.steady_samples
    if samples < MIN_STEADY_SAMPLES:
        raise InsufficientSamplesError(
            f"only {samples} post-burn-in records per trajectory; need {MIN_STEADY_SAMPLES}"
        )
    avg = result.trajectory_averages
    n = result.n_traj

    def mean_se(a):
        a = np.asarray(a)
        se = float(a.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        return float(a.mean()), se

    mean_n, se_n = mean_se(avg["mean_n"])
    mean_n2, se_n2 = mean_se(avg["mean_n2"])
    # per-trajectory contributions to the pooled variance of the means,
    # centred on the grand mean so that they average to it exactly
    variances, var_se = [], []
    for q in ("x", "p"):
        m = avg[f"mean_{q}"]
        grand = m.mean()
        contrib = avg[f"mean_{q}2"] - 2 * grand * m + grand**2
        v, se = mean_se(contrib)
        variances.append(v)
        var_se.append(se)
    pops = result.trajectory_populations
    pop_mean = pops.mean(axis=0)
    pop_se = pops.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(pops.shape[1], math.nan)
    return SteadyStats(
        mean_n=mean_n,
        mean_n2=mean_n2,
        populations=pop_mean / pop_mean.sum(),
        variances_of_means=(variances[0], variances[1]),
        std_errors={
            "mean_n": se_n,
            "mean_n2": se_n2,
            "variances_of_means": (var_se[0], var_se[1]),
            "populations": pop_se,
        },
        n_traj=n,
        samples_per_trajectory=samples,
    )
