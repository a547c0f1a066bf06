"""Audit bundled models and print the first witness of each failed condition.

Run with ``python demos/validator.py``.
"""

from mfecomp.cli import collect_violations
from mfecomp.config import load_config


def main():
    for name in ("security", "coordination", "search", "broken_security", "linear_xa_kernel"):
        reports = collect_violations(load_config(name).build())
        print(f"{name}: {'ok' if not reports else f'{len(reports)} violation reports'}")
        seen = set()
        for r in reports:
            if r.condition not in seen:
                seen.add(r.condition)
                print(f"  {r.condition}: {r.witness} margin {r.margin:.4g}")


if __name__ == "__main__":
    main()
