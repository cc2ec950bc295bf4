"""Thermalization of a damped harmonic oscillator, three ways.

Starts the oscillator in its ground state and follows the mean phonon
number under the linear Brownian master equation (LBME), its positivity-
restoring variant (PBME) and an ensemble of Brownian SSE trajectories.
LBME and the SSE ensemble both settle at ``n_T = 1``; the PBME's extra
position diffusion heats the steady state a little above it.

Run with ``python demos/fig1_harmonic.py [--trajectories N]``.
"""

import argparse
import math

import numpy as np

from brownian_sse.ensemble import EnsembleConfig, run_ensemble, steady_statistics
from brownian_sse.fock import FockSpace, fock_state, harmonic_hamiltonian, pure_to_density
from brownian_sse.master_eq import MeModel, evolve, make_rhs
from brownian_sse.sse import SseParams

OMEGA = 2 * math.pi
GAMMA, N_T, DIM = 4.0, 1.0, 30


def master_equation_curve(variant, dt, t_final, stride):
    sp = FockSpace(DIM)
    model = MeModel(variant, harmonic_hamiltonian(sp, OMEGA), gamma=GAMMA, n_t=N_T)
    levels = np.arange(DIM)
    curve = []
    evolve(pure_to_density(fock_state(sp, 0)), make_rhs(model), dt, t_final,
           lambda t, rho: curve.append(np.diag(rho).real @ levels), record_every=stride)
    return np.array(curve)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trajectories", type=int, default=200)
    ap.add_argument("--dt", type=float, default=1e-4)
    ap.add_argument("--t-final", type=float, default=10.0)
    args = ap.parse_args()

    record = 0.05
    stride = int(round(record / args.dt))
    lbme = master_equation_curve("lbme", args.dt, args.t_final, stride)
    pbme = master_equation_curve("pbme", args.dt, args.t_final, stride)

    sp = FockSpace(DIM)
    params = SseParams.brownian(GAMMA, N_T, harmonic_hamiltonian(sp, OMEGA), args.dt)
    cfg = EnsembleConfig(params, fock_state(sp, 0), n_traj=args.trajectories,
                         t_final=args.t_final, burn_in=min(20 / GAMMA, args.t_final / 2),
                         record_stride=record, master_seed=1)
    result = run_ensemble(cfg)
    sse, err = result.mean_observables["mean_n"], result.std_errors["mean_n"]

    print(f"{'t':>6} {'LBME':>8} {'PBME':>8} {'SSE':>8} {'+/-':>6}")
    for i in range(0, len(result.time_grid), max(1, len(result.time_grid) // 20)):
        print(f"{result.time_grid[i]:6.2f} {lbme[i]:8.4f} {pbme[i]:8.4f} {sse[i]:8.4f} {err[i]:6.3f}")

    stats = steady_statistics(result)
    vx, vp = stats.variances_of_means
    print()
    print(f"steady <n>: LBME {lbme[-1]:.4f}, PBME {pbme[-1]:.4f}, "
          f"SSE {stats.mean_n:.4f} +/- {stats.std_errors['mean_n']:.4f}")
    print(f"spread of the conditional means: Var<x> = {vx:.3f}, Var<p> = {vp:.3f} (n_T = {N_T:g})")
    avg = result.trajectory_averages
    print(f"time-averaged trajectory variances: V_x = {avg['var_x'].mean():.4f}, "
          f"V_p = {avg['var_p'].mean():.4f}, C_xp = {avg['cov_xp'].mean():+.4f}")


if __name__ == "__main__":
    main()
