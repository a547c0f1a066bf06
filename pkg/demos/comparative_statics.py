"""Sweep the investment cost and the noise tilt and report the SD ordering.

Run with ``python demos/comparative_statics.py``.
"""

from mfecomp import NoiseSpec, run_mld, sd_compare, security_game


def limit(game):
    traj, _ = run_mld(game, "lower", tol=1e-8, max_iters=50000)
    return traj.final


def report(label, values, states):
    print(label)
    for v, f in zip(values, states):
        print(f"  {v:>10}: mean {f.mean():7.3f}")
    for i in range(len(states) - 1):
        print(f"  {values[i]} vs {values[i + 1]}: {sd_compare(states[i], states[i + 1]).name}")


def main():
    costs = [0.005, 0.01, 0.05]
    report("cost", costs, [limit(security_game(cost=c)) for c in costs])
    tilts = [(0.4, 0.4), (0.45, 0.35), (0.5, 0.3)]
    report(
        "noise tilt q_minus/q_plus",
        [f"{a}/{b}" for a, b in tilts],
        [limit(security_game(noise=NoiseSpec.three_point(a, 0.2, b))) for a, b in tilts],
    )


if __name__ == "__main__":
    main()
