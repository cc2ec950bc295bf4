"""One trajectory: a number state collapsing to a coherent state.

The Brownian SSE continuously measures ``x`` and ``p`` at strength
``gamma n_T / 2``. Starting from ``|3>``, whose quadrature variances are
``3.5``, a single trajectory is driven to ``V_x = V_p = 1/2``, ``C_xp = 0``
within about ``1 / (gamma n_T)``, after which its means wander like a
classical Brownian particle. The feedback cancels the measurement's kicks
to the means, so the collapse does not pick a random point on the number
state's phase-space ring: the means start near zero and the excess energy
of ``|3>`` is removed along with the excess variance.

Run with ``python demos/collapse.py [--seed S]``.
"""

import argparse
import math

from brownian_sse.fock import FockSpace, fock_state, harmonic_hamiltonian
from brownian_sse.sse import SseParams, simulate_trajectory


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    sp = FockSpace(30)
    params = SseParams.brownian(4.0, 1.0, harmonic_hamiltonian(sp, 2 * math.pi), 1e-4)
    res = simulate_trajectory(fock_state(sp, 3), params, 3.0, seed=args.seed, record_stride=0.05)
    print(f"{'t':>5} {'<x>':>7} {'<p>':>7} {'V_x':>7} {'V_p':>7} {'C_xp':>7} {'<n>':>7}")
    for t, (mx, mp, vx, vp, c), n in zip(res.times, res.moments, res.mean_n):
        print(f"{t:5.2f} {mx:7.3f} {mp:7.3f} {vx:7.4f} {vp:7.4f} {c:+7.4f} {n:7.3f}")
    print(f"adaptive step refinements: {res.refinements}")


if __name__ == "__main__":
    main()
