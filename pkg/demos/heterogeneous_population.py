"""Two player types that differ in how much they suffer from others' insecurity.

Run with ``python demos/heterogeneous_population.py``.
"""

from mfecomp import run_mld_typed, security_typed


def main():
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        res = run_mld_typed(security_typed(0.1, 0.9, frac), tol=1e-8, max_iters=50000)
        per_type = ", ".join(f"{k} {m.population_state.mean():6.2f}" for k, m in res.members.items())
        print(f"fraction low {frac:4.2f}: mixture mean {res.mixture.mean():6.2f} ({per_type})")


if __name__ == "__main__":
    main()
