"""Command-line interface: ``mfecomp {validate,solve,sweep,simulate}``.

Exit codes: 0 success, 1 validation violations, 2 unreadable or invalid
configuration, 3 dynamics did not converge (artifacts are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import SWEEP_PARAMS, BuiltModel, ConfigError, ModelConfig, load_config, parse_config
from .dynamics import run_brd, run_mld, run_mld_typed
from .lattice import Ordering, PopulationState, sd_compare
from .simulate import SimConfig, simulate_finite_mld
from .solver import ConvergenceError
from .svg import Series, line_chart, write_svg
from .validate import validate_game, validate_separable

EXIT_OK, EXIT_VIOLATIONS, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2, 3

WORKERS_ENV = "MFECOMP_WORKERS"

ALGORITHMS = {
    "l-mld": ("mld", "lower"),
    "u-mld": ("mld", "upper"),
    "l-brd": ("brd", "lower"),
    "u-brd": ("brd", "upper"),
}

RELATION_NAMES = {
    Ordering.EQUAL: "equal",
    Ordering.F_DOMINATES: "i_dominates",
    Ordering.G_DOMINATES: "j_dominates",
    Ordering.INCOMPARABLE: "incomparable",
}

logger = logging.getLogger("mfecomp")


# ---------------------------------------------------------------------------
# output helpers


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    """Headered, LF-terminated CSV with locale-independent numbers."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])


def write_manifest(out: Path, command: str, cfg: Optional[ModelConfig], seed, started: float, extra=None) -> None:
    doc = {
        "command": command,
        "tool": "mfecomp",
        "version": __version__,
        "config_source": cfg.source if cfg else None,
        "config": cfg.to_dict() if cfg else None,
        "seed": seed,
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "wall_clock_seconds": round(time.time() - started, 6),
    }
    if extra:
        doc.update(extra)
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def worker_count(tasks: int) -> int:
    """Pool size: CPU count, capped by the environment variable and the task count."""
    n = os.cpu_count() or 1
    cap = os.environ.get(WORKERS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", WORKERS_ENV, cap)
    return max(1, min(n, tasks))


def _map(fn, tasks: list) -> list:
    n = worker_count(len(tasks))
    if n == 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _cdf_series(label: str, f: PopulationState) -> Series:
    return Series(label, f.grid.points, f.cdf(), step=True)


# ---------------------------------------------------------------------------
# validate


def collect_violations(built: BuiltModel, n_pairs: int = 200, seed: int = 0) -> list:
    """All violation reports for a built model, tagged with the type label if any."""
    kw = dict(n_pairs=n_pairs, seed=seed)
    if built.typed is not None:
        out = []
        for m in built.typed.types:
            for r in validate_game(m.game, **kw):
                r.witness = {"type": m.label, **r.witness}
                out.append(r)
        return out
    if built.separable is not None:
        return validate_separable(built.separable, **kw)
    return validate_game(built.game, **kw)


def _witness_text(w: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in w.items())


def _print_verdict(reports: list, stream=None) -> None:
    stream = stream or sys.stdout
    if not reports:
        print("all conditions satisfied", file=stream)
        return
    by_cond: dict = {}
    for r in reports:
        by_cond.setdefault(r.condition, []).append(r)
    width = max(len(c) for c in by_cond)
    print(f"{'condition':<{width}}  reports  worst margin", file=stream)
    for cond, rs in by_cond.items():
        worst = min(r.margin for r in rs)
        print(f"{cond:<{width}}  {len(rs):>7}  {worst:.6g}", file=stream)
    print("witnesses:", file=stream)
    for cond, rs in by_cond.items():
        for r in rs[:3]:
            print(f"  {cond}: {_witness_text(r.witness)} margin={r.margin:.6g}", file=stream)


def cmd_validate(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    reports = collect_violations(cfg.build(), args.probes, args.seed)
    _print_verdict(reports)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(
            out / "violations.csv",
            ["condition", "witness", "lhs", "rhs", "margin"],
            ([r.condition, _witness_text(r.witness), r.lhs, r.rhs, r.margin] for r in reports),
        )
        write_manifest(out, "validate", cfg, args.seed, started, {"violations": len(reports)})
    return EXIT_VIOLATIONS if reports else EXIT_OK


# ---------------------------------------------------------------------------
# solve


def _apply_overrides(cfg: ModelConfig, tol=None, max_iters=None, dp_tol=None) -> ModelConfig:
    d = cfg.to_dict()
    for key, val in (("tol", tol), ("max_iters", max_iters), ("dp_tol", dp_tol)):
        if val is not None:
            d["dynamics"][key] = val
    return parse_config(d, source=cfg.source)


def _action_values(game, strategy, transform=None) -> np.ndarray:
    if transform is not None:
        idx = transform.pull_back(strategy)
        return transform.separable.action_grid.points[idx]
    return strategy.values(game)


def solve_to_dir(cfg: ModelConfig, algorithm: str, out: Path, skip_validate: bool = False) -> dict:
    """Run one solve and write its artifacts; returns a summary with the exit code.

    Strategies are written in the model's original action units; for
    separable models this undoes the kernel-parameter transform.
    """
    started = time.time()
    out.mkdir(parents=True, exist_ok=True)
    kind, direction = ALGORITHMS[algorithm]
    built = cfg.build()
    if not skip_validate:
        reports = collect_violations(built)
        if reports:
            _print_verdict(reports, sys.stderr)
            write_manifest(out, "solve", cfg, None, started, {"algorithm": algorithm, "violations": len(reports)})
            return {"exit": EXIT_VIOLATIONS, "final": None}
    dyn = cfg.dynamics
    opts = dict(tol=dyn["tol"], max_iters=dyn["max_iters"], dp_tol=dyn["dp_tol"], eps_opt=dyn["eps_opt"])
    if built.typed is not None:
        if kind != "mld":
            raise ConfigError("heterogeneous populations support l-mld and u-mld only")
        res = run_mld_typed(built.typed, direction, **opts)
        traj = res.trajectory
        final = res.mixture
        residual = max(r.fixed_point_residual for r in res.members.values())
        gap = max(r.optimality_gap for r in res.members.values())
        converged, iterations = res.converged, res.iterations
        strat_rows = []
        for m in built.typed.types:
            tr = built.type_transforms.get(m.label)
            for t, mu in enumerate(traj.per_type[m.label]["strategies"]):
                acts = _action_values(m.game, mu, tr)
                strat_rows.extend((t, m.label, x, a) for x, a in zip(final.grid.points, acts))
        write_csv(out / "strategy.csv", ["iteration", "type", "state", "action"], strat_rows)
    else:
        runner = run_mld if kind == "mld" else run_brd
        traj, res = runner(built.game, direction, **opts)
        final = traj.final
        residual, gap = res.fixed_point_residual, res.optimality_gap
        converged, iterations = res.converged, res.iterations
        pts = final.grid.points
        write_csv(
            out / "strategy.csv",
            ["iteration", "state", "action"],
            (
                (t, x, a)
                for t, mu in enumerate(traj.strategies)
                for x, a in zip(pts, _action_values(built.game, mu, built.transform))
            ),
        )
    pts = final.grid.points
    write_csv(
        out / "population.csv",
        ["iteration", "state", "weight"],
        ((t, x, w) for t, f in enumerate(traj.population_states) for x, w in zip(pts, f.weights)),
    )
    write_csv(out / "convergence.csv", ["iteration", "tv_step"], ((t + 1, s) for t, s in enumerate(traj.tv_steps)))
    write_csv(out / "equilibrium.csv", ["residual", "gap", "iterations", "converged"], [(residual, gap, iterations, converged)])
    write_svg(
        out / "cdf.svg",
        line_chart([_cdf_series(algorithm.upper(), final)], title="Final population state",
                   xlabel="state", ylabel="CDF", ylim=(0.0, 1.0)),
    )
    code = EXIT_OK if converged else EXIT_NONCONVERGED
    write_manifest(out, "solve", cfg, None, started, {
        "algorithm": algorithm, "converged": bool(converged), "iterations": int(iterations),
    })
    return {
        "exit": code,
        "final": final.weights.copy(),
        "points": pts.copy(),
        "iterations": int(iterations),
        "converged": bool(converged),
        "residual": float(residual),
        "gap": float(gap),
    }


def cmd_solve(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args.tol, args.max_iters, args.dp_tol)
    summary = solve_to_dir(cfg, args.algorithm, Path(args.out), args.skip_validate)
    if summary["final"] is not None:
        f = summary["final"]
        mean = float(summary["points"] @ f)
        print(
            f"{args.algorithm}: iterations={summary['iterations']} converged={str(summary['converged']).lower()} "
            f"residual={summary['residual']:.3g} gap={summary['gap']:.3g} mean_state={mean:.4f}"
        )
    if summary["exit"] == EXIT_NONCONVERGED:
        print("dynamics did not converge within max_iters", file=sys.stderr)
    return summary["exit"]


# ---------------------------------------------------------------------------
# sweep


def _sweep_point(cfg_dict: dict, source, name: str, value: str, algorithm: str, out: str, skip_validate: bool) -> dict:
    cfg = parse_config(cfg_dict, source=source).with_param(name, value)
    return solve_to_dir(cfg, algorithm, Path(out), skip_validate)


def sweep_verdict(finals: list, labels: list, grid) -> tuple:
    """Pairwise SD relations and a one-line monotonicity verdict.

    The verdict reads the values in the given order: ``nondecreasing`` when
    each equilibrium dominates its predecessor, ``nonincreasing`` for the
    reverse.
    """
    states = [PopulationState(w, grid) for w in finals]
    matrix = {}
    for i, a in enumerate(states):
        for j, b in enumerate(states):
            matrix[i, j] = sd_compare(a, b)
    consecutive = [matrix[k + 1, k] for k in range(len(states) - 1)]
    up = all(o in (Ordering.EQUAL, Ordering.F_DOMINATES) for o in consecutive)
    down = all(o in (Ordering.EQUAL, Ordering.G_DOMINATES) for o in consecutive)
    incomparable = [(labels[i], labels[j]) for (i, j), o in matrix.items() if i < j and o is Ordering.INCOMPARABLE]
    if len(states) == 1:
        verdict = "single value: nothing to compare"
    elif up and down:
        verdict = "constant: all equilibria coincide"
    elif up:
        verdict = "SD-nondecreasing in the swept parameter"
    elif down:
        verdict = "SD-nonincreasing in the swept parameter"
    else:
        verdict = "not SD-monotone in the swept parameter"
    if incomparable:
        verdict += "; incomparable pairs: " + ", ".join(f"{a} vs {b}" for a, b in incomparable)
    return matrix, verdict


def cmd_sweep(args) -> int:
    started = time.time()
    if args.param not in SWEEP_PARAMS and args.param != "q_minus/q_plus":
        raise ConfigError(f"cannot sweep {args.param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    cfg = _apply_overrides(load_config(args.config), args.tol, args.max_iters, args.dp_tol)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    for v in values:
        cfg.with_param(args.param, v).build()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dirs = [out / f"point_{i:02d}" for i in range(len(values))]
    tasks = [
        (cfg.to_dict(), cfg.source, args.param, v, args.algorithm, str(d), args.skip_validate)
        for v, d in zip(values, dirs)
    ]
    results = _map(_sweep_point, tasks)
    write_csv(
        out / "sweep.csv",
        ["value", "directory", "iterations", "converged", "residual", "gap", "mean_state", "exit"],
        (
            (v, d.name, r.get("iterations", ""), r.get("converged", ""), r.get("residual", ""),
             r.get("gap", ""), "" if r["final"] is None else float(r["points"] @ r["final"]), r["exit"])
            for v, d, r in zip(values, dirs, results)
        ),
    )
    codes = [r["exit"] for r in results]
    ok = [(v, r) for v, r in zip(values, results) if r["final"] is not None]
    verdict = "no equilibria to compare"
    if ok:
        grid = cfg.build()
        grid = grid.game.state_grid if grid.game is not None else grid.typed.state_grid
        labels = [v for v, _ in ok]
        finals = [r["final"] for _, r in ok]
        matrix, verdict = sweep_verdict(finals, labels, grid)
        write_csv(
            out / "cdfs.csv",
            ["value", "state", "cdf"],
            ((v, x, c) for v, f in zip(labels, finals) for x, c in zip(grid.points, np.cumsum(f))),
        )
        write_csv(
            out / "sd_matrix.csv",
            ["value_i", "value_j", "relation"],
            ((labels[i], labels[j], RELATION_NAMES[o]) for (i, j), o in matrix.items()),
        )
        write_svg(
            out / "sweep.svg",
            line_chart(
                [Series(f"{args.param}={v}", grid.points, np.cumsum(f), step=True) for v, f in zip(labels, finals)],
                title=f"Equilibria across {args.param}", xlabel="state", ylabel="CDF", ylim=(0.0, 1.0),
            ),
        )
    (out / "verdict.txt").write_text(verdict + "\n", encoding="utf-8")
    print(verdict)
    write_manifest(out, "sweep", cfg, None, started, {
        "param": args.param, "values": values, "algorithm": args.algorithm, "verdict": verdict,
    })
    if EXIT_VIOLATIONS in codes:
        return EXIT_VIOLATIONS
    if EXIT_NONCONVERGED in codes:
        return EXIT_NONCONVERGED
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def _simulate_one(cfg_dict: dict, source, players: int, seed: int, steps: int, direction: str, mf: np.ndarray) -> dict:
    cfg = parse_config(cfg_dict, source=source)
    game = cfg.build().game
    fin = simulate_finite_mld(SimConfig(players, steps, seed, game, direction, cfg.dynamics["dp_tol"]))
    emp = np.array([f.weights for f in fin.empirical])
    tv_mf = 0.5 * np.abs(emp - mf).sum(axis=1)
    return {"empirical": emp, "tv_meanfield": tv_mf, "tv_step": np.array(fin.tv_steps)}


def _parse_players(text: str) -> list:
    try:
        players = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--players must be integers, got {text!r}") from exc
    if not players or min(players) < 2:
        raise ConfigError("--players needs values of at least 2")
    return players


def cmd_simulate(args) -> int:
    started = time.time()
    cfg = _apply_overrides(load_config(args.config), dp_tol=args.dp_tol)
    built = cfg.build()
    if built.game is None or built.game.coupling != "state":
        raise ConfigError("simulate supports homogeneous state-coupled models only")
    players = _parse_players(args.players)
    if args.steps < 1 or args.replications < 1:
        raise ConfigError("--steps and --replications must be positive")
    if not 0 <= args.seed < 2**64:
        raise ConfigError("--seed must be a 64-bit unsigned integer")
    direction = "lower" if args.direction == "lower" else "upper"
    traj, _ = run_mld(built.game, direction, max_iters=args.steps, dp_tol=cfg.dynamics["dp_tol"], stop_early=False)
    mf = np.array([f.weights for f in traj.population_states])
    seeds = [(args.seed + r) % 2**64 for r in range(args.replications)]
    tasks = [(cfg.to_dict(), cfg.source, m, s, args.steps, direction, mf) for m in players for s in seeds]
    results = _map(_simulate_one, tasks)
    keys = [(m, r, s) for m in players for r, s in enumerate(seeds)]
    pts = built.game.state_grid.points
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "empirical.csv",
        ["players", "replication", "seed", "step", "state", "weight"],
        (
            (m, r, s, t, pts[k], row[k])
            for (m, r, s), res in zip(keys, results)
            for t, row in enumerate(res["empirical"])
            for k in np.flatnonzero(row)
        ),
    )
    write_csv(
        out / "tv_series.csv",
        ["players", "replication", "seed", "step", "tv_meanfield", "tv_step"],
        (
            (m, r, s, t + 1, res["tv_meanfield"][t + 1], res["tv_step"][t])
            for (m, r, s), res in zip(keys, results)
            for t in range(args.steps)
        ),
    )
    summary, series = [], []
    for m in players:
        block = np.array([res["tv_meanfield"] for (mm, _, _), res in zip(keys, results) if mm == m])
        finals = block[:, -1]
        summary.append((m, len(seeds), float(np.median(finals)), float(finals.min()), float(finals.max()),
                        float(np.median(block.max(axis=1)))))
        series.append(Series(f"m={m}", np.arange(args.steps + 1), np.median(block, axis=0)))
    write_csv(
        out / "summary.csv",
        ["players", "replications", "median_final_tv", "min_final_tv", "max_final_tv", "median_max_tv"],
        summary,
    )
    write_svg(out / "tv.svg", line_chart(series, title="Finite population vs mean field",
                                          xlabel="step", ylabel="TV distance (median)"))
    for row in summary:
        print(f"m={row[0]}: median final TV {row[2]:.4f} over {row[1]} replication(s)")
    write_manifest(out, "simulate", cfg, args.seed, started, {
        "players": players, "steps": args.steps, "replications": args.replications,
        "seeds": seeds, "direction": direction,
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfecomp", description="Mean field equilibria of games with complementarities.")
    p.add_argument("--version", action="version", version=f"mfecomp {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def dyn_opts(sp):
        sp.add_argument("--tol", type=float, help="stop when successive TV falls below this")
        sp.add_argument("--max-iters", type=int, help="iteration cap for the dynamics")
        sp.add_argument("--dp-tol", type=float, help="value-iteration tolerance (L1)")
        sp.add_argument("--skip-validate", action="store_true", help="solve without checking the model conditions")

    v = sub.add_parser("validate", help="check the structural conditions of a model")
    v.add_argument("config", help="TOML file or bundled configuration name")
    v.add_argument("--probes", type=int, default=200, help="comparable population pairs per condition")
    v.add_argument("--seed", type=int, default=0, help="seed for the probe pairs")
    v.add_argument("--out", help="directory for violations.csv and manifest.json")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("solve", help="run one equilibrium-seeking dynamic")
    s.add_argument("config")
    s.add_argument("--algorithm", choices=sorted(ALGORITHMS), default="l-mld")
    s.add_argument("--out", required=True)
    dyn_opts(s)
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="comparative statics over one parameter")
    w.add_argument("config")
    w.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMS)}")
    w.add_argument("--values", required=True, help="comma-separated values; tilt values look like 0.45/0.35")
    w.add_argument("--algorithm", choices=sorted(ALGORITHMS), default="l-mld")
    w.add_argument("--out", required=True)
    dyn_opts(w)
    w.set_defaults(func=cmd_sweep)

    m = sub.add_parser("simulate", help="finite-population Monte Carlo against the mean field")
    m.add_argument("config")
    m.add_argument("--players", required=True, help="player count, or a comma-separated list")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--steps", type=int, default=1000)
    m.add_argument("--replications", type=int, default=10)
    m.add_argument("--direction", choices=("lower", "upper"), default="lower")
    m.add_argument("--dp-tol", type=float)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_simulate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
