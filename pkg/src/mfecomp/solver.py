"""Oblivious dynamic program against a fixed population state."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lattice import PopulationState
from .model import GameSpec

__all__ = [
    "EPS_OPT",
    "ConvergenceError",
    "ValueFunction",
    "Strategy",
    "BestResponseSet",
    "action_values",
    "bellman_backup",
    "value_iteration",
    "best_response_set",
    "extract_smallest",
    "extract_largest",
    "best_response",
    "policy_value",
]

EPS_OPT = 1e-9
DIRECT_SOLVE_MAX_STATES = 200


class ConvergenceError(RuntimeError):
    """An iterative method ran out of iterations."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3g} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(eq=False)
class ValueFunction:
    values: np.ndarray
    population_state: PopulationState
    iterations: int = 0
    residual_l1: float = 0.0
    residual_sup: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("value function has non-finite entries")


@dataclass(eq=False)
class Strategy:
    """Deterministic oblivious strategy: one action index per state."""

    action_index: np.ndarray

    def __post_init__(self):
        self.action_index = np.asarray(self.action_index, dtype=int)

    def __len__(self) -> int:
        return self.action_index.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Strategy):
            return NotImplemented
        return bool(np.array_equal(self.action_index, other.action_index))

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.action_index) >= 0))

    def dominated_by(self, other: "Strategy") -> bool:
        """Coordinatewise ``self <= other``."""
        return bool(np.all(self.action_index <= other.action_index))

    def check_feasible(self, game: GameSpec) -> None:
        if self.action_index.size != game.n_states:
            raise ValueError("strategy length does not match the state grid")
        if not np.all(game.feasible[np.arange(game.n_states), self.action_index]):
            raise ValueError("strategy picks an infeasible action")

    def values(self, game: GameSpec) -> np.ndarray:
        return game.action_grid.points[self.action_index]


@dataclass(eq=False)
class BestResponseSet:
    """Per-state maximizer sets as a boolean mask ``(n_states, n_actions)``."""

    mask: np.ndarray

    def __post_init__(self):
        if not self.mask.any(axis=1).all():
            raise ValueError("empty maximizer set")

    def actions(self, x: int) -> np.ndarray:
        return np.flatnonzero(self.mask[x])


def action_values(V, f: PopulationState, game: GameSpec) -> np.ndarray:
    """``pi(x, a, f) + beta * E[V(x') | x, a, f]``; ``-inf`` where infeasible."""
    R, K = game.evaluate(f)
    Q = R + game.discount * (K @ np.asarray(V, dtype=float))
    return np.where(game.feasible, Q, -np.inf)


def bellman_backup(V, f: PopulationState, game: GameSpec) -> np.ndarray:
    return action_values(V, f, game).max(axis=1)


def value_iteration(
    f: PopulationState,
    game: GameSpec,
    tol: float = 1e-4,
    max_iters: int = 100_000,
    initial: Optional[np.ndarray] = None,
) -> ValueFunction:
    """Iterate Bellman backups until the L1 change across states drops below ``tol``.

    Starts from zero unless ``initial`` is given (warm start).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    R, K = game.evaluate(f)
    feasible = game.feasible
    beta = game.discount
    V = np.zeros(game.n_states) if initial is None else np.array(initial, dtype=float)
    l1 = sup = np.inf
    for k in range(1, max_iters + 1):
        Q = np.where(feasible, R + beta * (K @ V), -np.inf)
        V_new = Q.max(axis=1)
        diff = np.abs(V_new - V)
        l1, sup = float(diff.sum()), float(diff.max())
        V = V_new
        if l1 < tol:
            return ValueFunction(V, f, k, l1, sup)
    raise ConvergenceError("value iteration did not converge", sup, max_iters)


def best_response_set(
    f: PopulationState, game: GameSpec, V: ValueFunction, eps_opt: float = EPS_OPT
) -> BestResponseSet:
    Q = action_values(V.values, f, game)
    best = Q.max(axis=1, keepdims=True)
    return BestResponseSet(Q >= best - eps_opt)


def extract_smallest(brs: BestResponseSet) -> Strategy:
    return Strategy(brs.mask.argmax(axis=1))


def extract_largest(brs: BestResponseSet) -> Strategy:
    na = brs.mask.shape[1]
    return Strategy(na - 1 - brs.mask[:, ::-1].argmax(axis=1))


def best_response(
    f: PopulationState,
    game: GameSpec,
    direction: str = "lower",
    tol: float = 1e-4,
    initial: Optional[np.ndarray] = None,
    eps_opt: float = EPS_OPT,
) -> tuple:
    """Smallest (``lower``) or largest (``upper``) optimal strategy against ``f``.

    Returns ``(strategy, value_function)``.
    """
    V = value_iteration(f, game, tol=tol, initial=initial)
    brs = best_response_set(f, game, V, eps_opt)
    if direction == "lower":
        return extract_smallest(brs), V
    if direction == "upper":
        return extract_largest(brs), V
    raise ValueError(f"direction must be 'lower' or 'upper', got {direction!r}")


def _policy_arrays(mu: Strategy, f: PopulationState, game: GameSpec) -> tuple:
    mu.check_feasible(game)
    R, K = game.evaluate(f)
    rows = np.arange(game.n_states)
    return R[rows, mu.action_index], K[rows, mu.action_index]


def policy_value(
    mu: Strategy,
    f: PopulationState,
    game: GameSpec,
    tol: float = 1e-10,
    max_iters: int = 1_000_000,
) -> ValueFunction:
    """Discounted value of following ``mu`` forever while the population stays at ``f``.

    Small grids are solved directly from ``(I - beta P_mu) V = r_mu``.
    """
    r, P = _policy_arrays(mu, f, game)
    beta = game.discount
    n = game.n_states
    if n <= DIRECT_SOLVE_MAX_STATES:
        V = np.linalg.solve(np.eye(n) - beta * P, r)
        return ValueFunction(V, f, 0, 0.0, 0.0)
    V = np.zeros(n)
    for k in range(1, max_iters + 1):
        V_new = r + beta * (P @ V)
        diff = np.abs(V_new - V)
        V = V_new
        if diff.sum() < tol:
            return ValueFunction(V, f, k, float(diff.sum()), float(diff.max()))
    raise ConvergenceError("policy evaluation did not converge", float(diff.max()), max_iters)
