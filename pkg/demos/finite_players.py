"""Finite populations against the mean-field trajectory.

Run with ``python demos/finite_players.py``.  Also prints the TV distance a
single multinomial sample of the exact mean-field state would show, which
bounds how close any finite run can get.
"""

import numpy as np

from mfecomp import SimConfig, compare_to_meanfield, run_mld, security_game, simulate_finite_mld

STEPS = 1000


def main():
    game = security_game()
    mf, _ = run_mld(game, "lower", max_iters=STEPS, stop_early=False)
    p = mf.final.weights
    rng = np.random.default_rng(0)
    for m in (50, 200, 1000):
        finals = [
            compare_to_meanfield(simulate_finite_mld(SimConfig(m, STEPS, seed, game)), mf).final
            for seed in range(10)
        ]
        floor = np.median([0.5 * np.abs(rng.multinomial(m, p) / m - p).sum() for _ in range(2000)])
        print(f"m={m:5d}: median final TV {np.median(finals):.4f}, sampling floor {floor:.4f}")


if __name__ == "__main__":
    main()
