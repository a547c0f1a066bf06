"""Numerical audit of the complementarity conditions a game must satisfy.

State and action pairs are checked exhaustively through differences of
neighbouring grid points (all pairs on small grids).  Population states
are probed with sampled SD-ordered pairs ``f <= f'`` built as the lattice
infimum and supremum of two Dirichlet draws.  Kernel statements are checked
against every upper-set indicator ``1{x' >= x_k}``, which on a finite grid is
equivalent to checking all nondecreasing test functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional

import numpy as np

from .lattice import ActionDistribution, PopulationState, sd_inf, sd_sup
from .model import GameSpec, SeparableSpec, separable_to_standard

__all__ = [
    "TAU_CHECK",
    "ViolationReport",
    "comparable_pairs",
    "check_payoff",
    "check_kernel",
    "check_separable",
    "validate_game",
    "validate_separable",
]

TAU_CHECK = 1e-9
EXHAUSTIVE_MAX_STATES = 12
EXHAUSTIVE_MAX_ACTIONS = 8


@dataclass
class ViolationReport:
    """One failed inequality ``lhs >= rhs``; ``margin = lhs - rhs`` is negative."""

    condition: str
    witness: dict
    lhs: float
    rhs: float
    margin: float = field(init=False)

    def __post_init__(self):
        self.margin = float(self.lhs - self.rhs)

    def row(self) -> dict:
        return {"condition": self.condition, **self.witness, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin}


class _Collector:
    def __init__(self, tau: float, max_per_condition: int):
        self.tau = tau
        self.cap = max_per_condition
        self.reports: list = []
        self.counts: dict = {}

    def add(self, condition: str, lhs: np.ndarray, rhs: np.ndarray, witness_fn, mask=None):
        """Record entries where ``lhs < rhs - tau``; ``witness_fn(index_tuple)`` names them."""
        lhs = np.asarray(lhs, dtype=float)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), lhs.shape)
        bad = lhs - rhs < -self.tau
        if mask is not None:
            bad &= np.broadcast_to(mask, lhs.shape)
        if not bad.any():
            return
        n_prev = self.counts.get(condition, 0)
        self.counts[condition] = n_prev + int(bad.sum())
        room = self.cap - n_prev
        if room <= 0:
            return
        idx = np.argwhere(bad)
        order = np.argsort((lhs - rhs)[bad], kind="stable")[:room]
        for i in order:
            pos = tuple(int(v) for v in idx[i])
            self.reports.append(ViolationReport(condition, witness_fn(pos), float(lhs[pos]), float(rhs[pos])))


def comparable_pairs(grid, n_pairs: int = 200, seed: int = 0, cls=PopulationState) -> list:
    """SD-ordered pairs ``(low, high)`` on ``grid``, extremes first."""
    rng = np.random.default_rng(seed)
    n = len(grid)
    pairs = [(cls.lowest(grid), cls.highest(grid))]
    while len(pairs) < n_pairs:
        alpha = rng.choice([0.2, 1.0, 5.0])
        a = cls(rng.dirichlet(np.full(n, alpha)), grid)
        b = cls(rng.dirichlet(np.full(n, alpha)), grid)
        pairs.append((sd_inf(a, b), sd_sup(a, b)))
    return pairs


def _env_cls(game: GameSpec):
    return PopulationState if game.coupling == "state" else ActionDistribution


def _use_exhaustive(game: GameSpec, exhaustive: Optional[bool]) -> bool:
    if exhaustive is not None:
        return exhaustive
    return game.n_states <= EXHAUSTIVE_MAX_STATES and game.n_actions <= EXHAUSTIVE_MAX_ACTIONS


def _index_pairs(n: int, exhaustive: bool):
    if exhaustive:
        pairs = list(combinations(range(n), 2))
        if not pairs:
            return np.zeros(0, int), np.zeros(0, int)
        lo, hi = zip(*pairs)
        return np.array(lo), np.array(hi)
    return np.arange(n - 1), np.arange(1, n)


def check_payoff(
    game: GameSpec,
    n_pairs: int = 200,
    seed: int = 0,
    exhaustive: Optional[bool] = None,
    check_monotone: bool = True,
    tau: float = TAU_CHECK,
    max_per_condition: int = 25,
) -> list:
    """Payoff conditions: nondecreasing in x (and its maximum over feasible
    actions), supermodular in (x, a), increasing differences in (x, a) and f."""
    col = _Collector(tau, max_per_condition)
    F = game.feasible
    ex = _use_exhaustive(game, exhaustive)
    xs = _index_pairs(game.n_states, ex)
    as_ = _index_pairs(game.n_actions, ex)
    x0, x1 = xs
    a0, a1 = as_
    pairs = comparable_pairs(game.env_grid, n_pairs, seed, _env_cls(game))
    for j, (f_lo, f_hi) in enumerate(pairs):
        R_lo = game.evaluate(f_lo)[0].copy()
        R_hi = game.evaluate(f_hi)[0].copy()
        for tag, R in (("lo", R_lo), ("hi", R_hi)):
            wit = lambda p, tag=tag: {"x": int(x0[p[0]]), "x_hi": int(x1[p[0]]), "a": int(p[1]), "probe": j, "f": tag}
            if check_monotone:
                col.add("payoff-nondecreasing-x", R[x1], R[x0], wit, F[x0] & F[x1])
                best = np.where(F, R, -np.inf).max(axis=1)
                col.add(
                    "payoff-sup-nondecreasing-x", best[x1], best[x0],
                    lambda p, tag=tag: {"x": int(x0[p[0]]), "x_hi": int(x1[p[0]]), "probe": j, "f": tag},
                )
            Fm = F[x0][:, a0] & F[x0][:, a1] & F[x1][:, a0] & F[x1][:, a1]
            col.add(
                "payoff-supermodular-(x,a)",
                R[x1][:, a1] + R[x0][:, a0], R[x1][:, a0] + R[x0][:, a1],
                lambda p, tag=tag: {"x": int(x0[p[0]]), "x_hi": int(x1[p[0]]),
                                    "a": int(a0[p[1]]), "a_hi": int(a1[p[1]]), "probe": j, "f": tag},
                Fm,
            )
        D = R_hi - R_lo
        col.add(
            "payoff-increasing-differences-(x,a)-f", D[x1], D[x0],
            lambda p: {"x": int(x0[p[0]]), "x_hi": int(x1[p[0]]), "a": int(p[1]), "probe": j},
            F[x0] & F[x1],
        )
        col.add(
            "payoff-increasing-differences-(x,a)-f", D[:, a1], D[:, a0],
            lambda p: {"x": int(p[0]), "a": int(a0[p[1]]), "a_hi": int(a1[p[1]]), "probe": j},
            F[:, a0] & F[:, a1],
        )
    return col.reports


def _upper_tails(K: np.ndarray) -> np.ndarray:
    """``T[..., k] = P(x' >= x_{k+1})`` for k = 0..n-2 (all nontrivial step functions)."""
    return 1.0 - np.cumsum(K, axis=-1)[..., :-1]


def check_kernel(
    game: GameSpec,
    n_pairs: int = 200,
    seed: int = 0,
    exhaustive: Optional[bool] = None,
    tau: float = TAU_CHECK,
    max_per_condition: int = 25,
) -> list:
    """Kernel conditions via upper-set indicators: nondecreasing in x, a and f,
    supermodular in (x, a), increasing differences in (x, a) and f."""
    col = _Collector(tau, max_per_condition)
    F = game.feasible
    ex = _use_exhaustive(game, exhaustive)
    x0, x1 = _index_pairs(game.n_states, ex)
    a0, a1 = _index_pairs(game.n_actions, ex)
    m = F[..., None]
    pairs = comparable_pairs(game.env_grid, n_pairs, seed, _env_cls(game))
    n_env = 1 if not game.kernel_depends_on_env else len(pairs)
    for j, (f_lo, f_hi) in enumerate(pairs[:n_env]):
        T_lo = _upper_tails(game.evaluate(f_lo)[1])
        T_hi = _upper_tails(game.evaluate(f_hi)[1])
        for tag, T in (("lo", T_lo), ("hi", T_hi)):
            col.add(
                "kernel-nondecreasing-x", T[x1], T[x0],
                lambda p, tag=tag: {"x": int(x0[p[0]]), "x_hi": int(x1[p[0]]), "a": p[1], "step": p[2] + 1, "probe": j, "f": tag},
                m[x0] & m[x1],
            )
            col.add(
                "kernel-nondecreasing-a", T[:, a1], T[:, a0],
                lambda p, tag=tag: {"x": p[0], "a": int(a0[p[1]]), "a_hi": int(a1[p[1]]), "step": p[2] + 1, "probe": j, "f": tag},
                m[:, a0] & m[:, a1],
            )
            Fm = (F[x0][:, a0] & F[x0][:, a1] & F[x1][:, a0] & F[x1][:, a1])[..., None]
            col.add(
                "kernel-supermodular-(x,a)",
                T[x1][:, a1] + T[x0][:, a0], T[x1][:, a0] + T[x0][:, a1],
                lambda p, tag=tag: {"x": int(x0[p[0]]), "x_hi": int(x1[p[0]]), "a": int(a0[p[1]]),
                                    "a_hi": int(a1[p[1]]), "step": p[2] + 1, "probe": j, "f": tag},
                Fm,
            )
            if not game.kernel_depends_on_env:
                break
        if not game.kernel_depends_on_env:
            break
        D = T_hi - T_lo
        col.add(
            "kernel-nondecreasing-f", T_hi, T_lo,
            lambda p: {"x": p[0], "a": p[1], "step": p[2] + 1, "probe": j}, m,
        )
        col.add(
            "kernel-increasing-differences-(x,a)-f", D[x1], D[x0],
            lambda p: {"x": int(x0[p[0]]), "x_hi": int(x1[p[0]]), "a": p[1], "step": p[2] + 1, "probe": j},
            m[x0] & m[x1],
        )
        col.add(
            "kernel-increasing-differences-(x,a)-f", D[:, a1], D[:, a0],
            lambda p: {"x": p[0], "a": int(a0[p[1]]), "a_hi": int(a1[p[1]]), "step": p[2] + 1, "probe": j},
            m[:, a0] & m[:, a1],
        )
    return col.reports


def _slopes(values, points):
    return np.diff(values, axis=-1) / np.diff(points)


def check_separable(
    s: SeparableSpec,
    n_pairs: int = 200,
    seed: int = 0,
    tau: float = TAU_CHECK,
    max_per_condition: int = 25,
) -> list:
    """Conditions on the separable primitives ``v``, ``c``, ``h`` and the
    parameterised kernel.  Utility monotonicity is skipped when the model
    declares a non-monotone utility together with a population-independent
    kernel."""
    col = _Collector(tau, max_per_condition)
    xg, ag = s.state_grid.points, s.action_grid.points
    nx = xg.size
    pairs = comparable_pairs(s.state_grid, n_pairs, seed)

    c = s.cost_vector()
    if c.size > 1:
        col.add("cost-nondecreasing", c[1:], c[:-1], lambda p: {"a": p[0], "a_hi": p[0] + 1})
    if c.size > 2:
        sl = _slopes(c, ag)
        col.add("cost-convex", sl[1:], sl[:-1], lambda p: {"a": p[0] + 1})

    H = s.h_matrix()
    col.add("h-nondecreasing-x", H[1:], H[:-1], lambda p: {"x": p[0], "x_hi": p[0] + 1, "a": p[1]})
    if ag.size > 1:
        col.add("h-nondecreasing-a", H[:, 1:], H[:, :-1], lambda p: {"x": p[0], "a": p[1], "a_hi": p[1] + 1})
        col.add(
            "h-supermodular-(x,a)", H[1:, 1:] + H[:-1, :-1], H[1:, :-1] + H[:-1, 1:],
            lambda p: {"x": p[0], "x_hi": p[0] + 1, "a": p[1], "a_hi": p[1] + 1},
        )
    if ag.size > 2:
        sl = _slopes(H, ag)
        col.add("h-concave-a", sl[:, :-1], sl[:, 1:], lambda p: {"x": p[0], "a": p[1] + 1})

    h_vals = np.unique(np.round(H, 12))
    check_v_monotone = s.payoff_monotone or not s.kernel_f_independent
    K_ref = None
    for j, (f_lo, f_hi) in enumerate(pairs):
        v_lo = np.asarray(s.utility(f_lo), dtype=float)
        v_hi = np.asarray(s.utility(f_hi), dtype=float)
        if check_v_monotone:
            for tag, v in (("lo", v_lo), ("hi", v_hi)):
                col.add("utility-nondecreasing-x", v[1:], v[:-1],
                        lambda p, tag=tag: {"x": p[0], "x_hi": p[0] + 1, "probe": j, "f": tag})
        d = v_hi - v_lo
        col.add("utility-increasing-differences-x-f", d[1:], d[:-1],
                lambda p: {"x": p[0], "x_hi": p[0] + 1, "probe": j})

        T_lo = _upper_tails(np.asarray(s.param_kernel(h_vals, f_lo), dtype=float))
        T_hi = _upper_tails(np.asarray(s.param_kernel(h_vals, f_hi), dtype=float))
        for tag, T in (("lo", T_lo), ("hi", T_hi)):
            col.add("kernel-nondecreasing-h", T[1:], T[:-1],
                    lambda p, tag=tag: {"h": float(h_vals[p[0]]), "h_hi": float(h_vals[p[0] + 1]),
                                        "step": p[1] + 1, "probe": j, "f": tag})
        col.add("kernel-nondecreasing-f", T_hi, T_lo,
                lambda p: {"h": float(h_vals[p[0]]), "step": p[1] + 1, "probe": j})
        D = T_hi - T_lo
        col.add("kernel-increasing-differences-h-f", D[1:], D[:-1],
                lambda p: {"h": float(h_vals[p[0]]), "h_hi": float(h_vals[p[0] + 1]), "step": p[1] + 1, "probe": j})
        if s.kernel_f_independent:
            if K_ref is None:
                K_ref = T_lo
            for T in (T_lo, T_hi):
                dev = np.abs(T - K_ref)
                col.add("kernel-f-independent", -dev, np.zeros_like(dev),
                        lambda p: {"h": float(h_vals[p[0]]), "step": p[1] + 1, "probe": j})
    return col.reports


def validate_game(game: GameSpec, check_monotone: bool = True, **kw) -> list:
    return check_payoff(game, check_monotone=check_monotone, **kw) + check_kernel(game, **kw)


def validate_separable(s: SeparableSpec, **kw) -> list:
    """Separable-primitive checks plus the standard checks on the transformed game."""
    game = separable_to_standard(s).game
    relaxed = not s.payoff_monotone and s.kernel_f_independent
    return check_separable(s, **kw) + validate_game(game, check_monotone=not relaxed, **kw)
