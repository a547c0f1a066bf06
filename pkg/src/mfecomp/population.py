"""Population-level operators: one-step push, extremal invariant distributions,
and the action pushforward for action-coupled games."""

from __future__ import annotations

import logging

import numpy as np

from .lattice import ActionDistribution, PopulationState, tv_distance
from .model import GameSpec
from .solver import ConvergenceError, Strategy

__all__ = [
    "transition_matrix",
    "step_population",
    "invariant_smallest",
    "invariant_largest",
    "action_pushforward",
]

logger = logging.getLogger(__name__)


def transition_matrix(mu: Strategy, env: PopulationState, game: GameSpec) -> np.ndarray:
    """Row-stochastic matrix ``P[x, x'] = P(x' | x, mu(x), env)``."""
    mu.check_feasible(game)
    _, K = game.evaluate(env)
    return np.asarray(K[np.arange(game.n_states), mu.action_index])


def step_population(
    mu: Strategy, f_env: PopulationState, g: PopulationState, game: GameSpec
) -> PopulationState:
    """Push the mass ``g`` one period forward under ``mu``.

    ``f_env`` conditions the kernel; in the myopic dynamics it equals ``g``.
    """
    if g.grid != game.state_grid:
        raise ValueError("pushed distribution is not on the state grid")
    P = transition_matrix(mu, f_env, game)
    return PopulationState(g.weights @ P, game.state_grid)


def _invariant(mu, f_env, game, start, tol, max_iters):
    if not mu.is_monotone():
        logger.warning("strategy is not nondecreasing; invariant extremes may not be ordered")
    P = transition_matrix(mu, f_env, game)
    g = np.zeros(game.n_states)
    g[start] = 1.0
    for k in range(1, max_iters + 1):
        g_new = g @ P
        step = 0.5 * np.abs(g_new - g).sum()
        g = g_new
        if step < tol:
            return PopulationState(g / g.sum(), game.state_grid)
    raise ConvergenceError("invariant distribution iteration stalled", step, max_iters)


def invariant_smallest(
    mu: Strategy, f_env: PopulationState, game: GameSpec, tol: float = 1e-10, max_iters: int = 10**6
) -> PopulationState:
    """Smallest invariant distribution of the chain induced by ``mu`` at ``f_env``.

    Found by iterating the population push from a point mass on the lowest
    state; the iterates rise monotonically to the smallest invariant law.
    """
    return _invariant(mu, f_env, game, 0, tol, max_iters)


def invariant_largest(
    mu: Strategy, f_env: PopulationState, game: GameSpec, tol: float = 1e-10, max_iters: int = 10**6
) -> PopulationState:
    """Largest invariant distribution, iterating down from the highest state."""
    return _invariant(mu, f_env, game, game.n_states - 1, tol, max_iters)


def action_pushforward(mu: Strategy, f: PopulationState, game: GameSpec) -> ActionDistribution:
    """Distribution of actions played when states follow ``f`` and play ``mu``."""
    if f.grid != game.state_grid:
        raise ValueError("population state is not on the state grid")
    alpha = np.bincount(mu.action_index, weights=f.weights, minlength=game.n_actions)
    return ActionDistribution(alpha, game.action_grid)
