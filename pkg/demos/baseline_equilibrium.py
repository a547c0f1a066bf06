"""Solve the security baseline with all four dynamics and compare the results.

Run with ``python demos/baseline_equilibrium.py``.
"""

from mfecomp import run_brd, run_mld, sd_leq, security_game, tv_distance


def main():
    game = security_game()
    finals = {}
    for name, run, direction in (
        ("L-MLD", run_mld, "lower"),
        ("U-MLD", run_mld, "upper"),
        ("L-BRD", run_brd, "lower"),
        ("U-BRD", run_brd, "upper"),
    ):
        traj, res = run(game, direction)
        finals[name] = traj.final
        print(
            f"{name}: {res.iterations:4d} iterations, mean state {traj.final.mean():7.3f}, "
            f"residual {res.fixed_point_residual:.2e}, gap {res.optimality_gap:.2e}"
        )
    print("L-MLD below U-MLD:", sd_leq(finals["L-MLD"], finals["U-MLD"]))

    # The stopping rule bounds the step size, not the distance to the limit.
    tight, _ = run_mld(game, "lower", tol=1e-9, max_iters=20000)
    print(f"TV(L-MLD at default tol, L-BRD) = {tv_distance(finals['L-MLD'], finals['L-BRD']):.3f}")
    print(f"TV(L-MLD at tol 1e-9,   L-BRD) = {tv_distance(tight.final, finals['L-BRD']):.2e}")


if __name__ == "__main__":
    main()
