"""Equilibrium-seeking dynamics and equilibrium verification.

``run_mld`` implements myopic learning dynamics: at every step the
population best-responds to the current population state as if it were
permanent, and the state moves one period forward.  ``run_brd`` iterates
best response followed by the extremal invariant distribution.  Both come
in a lower variant (start at the bottom state, smallest best responses) and
an upper variant (top state, largest best responses).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lattice import TAU_SD, PopulationState, sd_leq, tv_distance
from .model import GameSpec, TypedGameSpec
from .population import (
    action_pushforward,
    invariant_largest,
    invariant_smallest,
    step_population,
)
from .solver import EPS_OPT, Strategy, best_response, policy_value, value_iteration

__all__ = [
    "RESIDUAL_THRESHOLD",
    "GAP_THRESHOLD",
    "Trajectory",
    "EquilibriumResult",
    "TypedResult",
    "check_equilibrium",
    "run_mld",
    "run_brd",
    "run_mld_typed",
]

logger = logging.getLogger(__name__)

RESIDUAL_THRESHOLD = 5e-4
GAP_THRESHOLD = 1e-3

DEFAULT_TOL = 5e-4
DEFAULT_DP_TOL = 1e-4
DEFAULT_MAX_ITERS = 1000


@dataclass(eq=False)
class Trajectory:
    """Population states ``f_0..f_T``, strategies ``mu_0..mu_{T-1}`` and step sizes."""

    population_states: list = field(default_factory=list)
    strategies: list = field(default_factory=list)
    tv_steps: list = field(default_factory=list)
    monotone_violations: int = 0
    action_distributions: list = field(default_factory=list)
    per_type: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tv_steps)

    @property
    def final(self) -> PopulationState:
        return self.population_states[-1]


@dataclass(eq=False)
class EquilibriumResult:
    strategy: Strategy
    population_state: PopulationState
    fixed_point_residual: float
    optimality_gap: float
    iterations: int = 0
    converged: bool = True
    action_distribution: Optional[PopulationState] = None

    @property
    def is_equilibrium(self) -> bool:
        return (
            self.fixed_point_residual < RESIDUAL_THRESHOLD
            and self.optimality_gap < GAP_THRESHOLD
        )


@dataclass(eq=False)
class TypedResult:
    trajectory: Trajectory
    mixture: PopulationState
    members: dict
    iterations: int
    converged: bool


def _check_direction(direction: str) -> None:
    if direction not in ("lower", "upper"):
        raise ValueError(f"direction must be 'lower' or 'upper', got {direction!r}")


def _ordered(prev_f, f, prev_mu, mu, direction) -> int:
    """Number of order violations (0, 1 or 2) between consecutive steps."""
    bad = 0
    if direction == "lower":
        bad += not sd_leq(prev_f, f, TAU_SD)
        if prev_mu is not None:
            bad += not prev_mu.dominated_by(mu)
    else:
        bad += not sd_leq(f, prev_f, TAU_SD)
        if prev_mu is not None:
            bad += not mu.dominated_by(prev_mu)
    return bad


def check_equilibrium(
    mu: Strategy,
    f: PopulationState,
    game: GameSpec,
    tol_value: float = 1e-8,
    iterations: int = 0,
    converged: bool = True,
) -> EquilibriumResult:
    """Measure how far ``(mu, f)`` is from a mean field equilibrium.

    The residual is ``tv(f, Q_{mu,f}(f))``; the gap is the largest per-state
    shortfall of ``mu``'s value below the optimal value against ``f``.  For
    action-coupled games the conditioning distribution is the action
    pushforward of ``(mu, f)``.
    """
    alpha = None
    env = f
    if game.coupling == "action":
        alpha = action_pushforward(mu, f, game)
        env = alpha
    residual = tv_distance(f, step_population(mu, env, f, game))
    v_star = value_iteration(env, game, tol=tol_value)
    v_mu = policy_value(mu, env, game, tol=tol_value)
    gap = max(0.0, float(np.max(v_star.values - v_mu.values)))
    return EquilibriumResult(mu, f, residual, gap, iterations, converged, alpha)


def _initial(game: GameSpec, direction: str):
    if direction == "lower":
        return PopulationState.lowest(game.state_grid), game.lowest_env()
    return PopulationState.highest(game.state_grid), game.highest_env()


def _run(game, direction, tol, max_iters, dp_tol, stop_early, eps_opt, advance, tol_value):
    _check_direction(direction)
    if tol <= 0:
        raise ValueError("tol must be positive")
    f, alpha = _initial(game, direction)
    action_coupled = game.coupling == "action"
    traj = Trajectory(population_states=[f])
    if action_coupled:
        traj.action_distributions.append(alpha)
    V = None
    prev_mu = None
    converged = False
    for t in range(max_iters):
        env = alpha if action_coupled else f
        mu, vf = best_response(env, game, direction, dp_tol, V, eps_opt)
        V = vf.values
        f_next = advance(mu, env, f)
        step = tv_distance(f_next, f)
        if action_coupled:
            alpha_next = action_pushforward(mu, f_next, game)
            step = max(step, tv_distance(alpha_next, alpha))
            traj.action_distributions.append(alpha_next)
            alpha = alpha_next
        traj.monotone_violations += _ordered(f, f_next, prev_mu, mu, direction)
        traj.strategies.append(mu)
        traj.tv_steps.append(step)
        traj.population_states.append(f_next)
        f, prev_mu = f_next, mu
        if step < tol:
            converged = True
            if stop_early:
                break
        else:
            converged = False
    if not converged:
        logger.warning("dynamics did not reach tol=%g in %d iterations", tol, max_iters)
    env = alpha if action_coupled else f
    mu_final, _ = best_response(env, game, direction, dp_tol, V, eps_opt)
    result = check_equilibrium(mu_final, f, game, tol_value, len(traj), converged)
    return traj, result


def run_mld(
    game: GameSpec,
    direction: str = "lower",
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    dp_tol: float = DEFAULT_DP_TOL,
    stop_early: bool = True,
    eps_opt: float = EPS_OPT,
    tol_value: float = 1e-8,
) -> tuple:
    """Myopic learning dynamics from the bottom (``lower``) or top (``upper``) state.

    Stops once the total variation between successive population states
    falls below ``tol`` (unless ``stop_early`` is False, in which case exactly
    ``max_iters`` steps are taken).  Returns ``(trajectory, result)``; the
    result is verified against the best response to the final state.
    """

    def advance(mu, env, f):
        return step_population(mu, env, f, game)

    return _run(game, direction, tol, max_iters, dp_tol, stop_early, eps_opt, advance, tol_value)


def run_brd(
    game: GameSpec,
    direction: str = "lower",
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    dp_tol: float = DEFAULT_DP_TOL,
    stop_early: bool = True,
    eps_opt: float = EPS_OPT,
    tol_value: float = 1e-8,
    invariant_tol: float = 1e-10,
) -> tuple:
    """Best-response dynamics: ``f_{t+1}`` is the extremal invariant law of the
    extremal best response to ``f_t``."""
    invariant = invariant_smallest if direction == "lower" else invariant_largest

    def advance(mu, env, f):
        return invariant(mu, env, game, tol=invariant_tol)

    return _run(game, direction, tol, max_iters, dp_tol, stop_early, eps_opt, advance, tol_value)


def run_mld_typed(
    typed: TypedGameSpec,
    direction: str = "lower",
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    dp_tol: float = DEFAULT_DP_TOL,
    eps_opt: float = EPS_OPT,
    tol_value: float = 1e-8,
) -> TypedResult:
    """Myopic learning dynamics for a population of several player types.

    Every type best-responds to the shared mixture ``sum_d psi(d) f_d`` and
    moves its own subpopulation one period forward; the run stops on the
    mixture's total-variation step.
    """
    _check_direction(direction)
    grid = typed.state_grid
    start = PopulationState.lowest(grid) if direction == "lower" else PopulationState.highest(grid)
    masses = typed.masses
    parts = [start] * len(typed.types)
    mix = start
    values = [None] * len(typed.types)
    traj = Trajectory(population_states=[mix])
    traj.per_type = {m.label: {"population_states": [start], "strategies": []} for m in typed.types}
    converged = False
    for t in range(max_iters):
        new_parts = []
        for i, member in enumerate(typed.types):
            mu, vf = best_response(mix, member.game, direction, dp_tol, values[i], eps_opt)
            values[i] = vf.values
            new_parts.append(step_population(mu, mix, parts[i], member.game))
            rec = traj.per_type[member.label]
            rec["strategies"].append(mu)
            rec["population_states"].append(new_parts[-1])
        mix_next = PopulationState(
            np.sum([m * p.weights for m, p in zip(masses, new_parts)], axis=0), grid
        )
        step = tv_distance(mix_next, mix)
        traj.monotone_violations += _ordered(mix, mix_next, None, None, direction)
        traj.tv_steps.append(step)
        traj.population_states.append(mix_next)
        parts, mix = new_parts, mix_next
        if step < tol:
            converged = True
            break
    members = {}
    for i, member in enumerate(typed.types):
        mu, _ = best_response(mix, member.game, direction, dp_tol, values[i], eps_opt)
        g = member.game
        residual = tv_distance(parts[i], step_population(mu, mix, parts[i], g))
        v_star = value_iteration(mix, g, tol=tol_value)
        v_mu = policy_value(mu, mix, g, tol=tol_value)
        gap = max(0.0, float(np.max(v_star.values - v_mu.values)))
        members[member.label] = EquilibriumResult(mu, parts[i], residual, gap, len(traj), converged)
    return TypedResult(traj, mix, members, len(traj), converged)
