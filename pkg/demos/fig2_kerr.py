"""Steady energy of a Kerr oscillator against the damping rate.

For ``H = omega n^2`` the LBME steady state is still the harmonic thermal
state (``<n^2> = 3`` at ``n_T = 1``), whatever the spectrum. The true
Boltzmann distribution for these levels gives ``<n^2> = 0.49``. This demo
sweeps the damping rate of the Brownian SSE and prints where its steady
``<n^2>`` falls between the two, together with the level populations.

Run with ``python demos/fig2_kerr.py [--gammas 0.1,0.4,1.6,6.4] [--trajectories N]``.
"""

import argparse
import math

import numpy as np

from brownian_sse.ensemble import EnsembleConfig, run_ensemble, steady_statistics
from brownian_sse.fock import FockSpace, fock_state, kerr_hamiltonian
from brownian_sse.master_eq import MeModel, stationary_state
from brownian_sse.observables import ThermalSpec, boltzmann_distribution
from brownian_sse.sse import SseParams

OMEGA = 2 * math.pi
DIM = 40


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--gammas", default="0.1,0.4,1.6,6.4")
    ap.add_argument("--trajectories", type=int, default=100)
    ap.add_argument("--window", type=float, default=30.0, help="averaging window after burn-in")
    args = ap.parse_args()
    gammas = [float(g) for g in args.gammas.split(",")]

    sp = FockSpace(DIM)
    h = kerr_hamiltonian(sp, OMEGA)
    levels = np.arange(DIM)
    thermal = boltzmann_distribution(ThermalSpec.kerr(1.0, OMEGA), DIM)
    print(f"Boltzmann <n^2> = {thermal @ levels**2:.3f}, p0 = {thermal[0]:.3f}")

    print(f"{'gamma':>6} {'SSE <n^2>':>10} {'+/-':>6} {'LBME':>6} {'p0':>6} {'p1':>6} {'p2':>6}")
    for g in gammas:
        dt = min(1e-3, 1.6e-3 / g)
        burn = min(20 / g, 20.0)
        params = SseParams.brownian(g, 1.0, h, dt)
        cfg = EnsembleConfig(params, fock_state(sp, 0), n_traj=args.trajectories,
                             t_final=burn + args.window, burn_in=burn, record_stride=0.1,
                             master_seed=7)
        stats = steady_statistics(run_ensemble(cfg))
        lbme = stationary_state(MeModel("lbme", h, gamma=g, n_t=1.0)).rho.populations
        p = stats.populations
        print(f"{g:6.2f} {stats.mean_n2:10.3f} {stats.std_errors['mean_n2']:6.3f} "
              f"{lbme @ levels**2:6.2f} {p[0]:6.3f} {p[1]:6.3f} {p[2]:6.3f}")


if __name__ == "__main__":
    main()
