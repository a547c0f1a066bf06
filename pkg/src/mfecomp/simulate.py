"""Finite-population Monte Carlo of the myopic learning dynamics.

Randomness is drawn from Philox streams keyed by the run seed; the counter
is positioned by step, and player ``i`` consumes the ``i``-th uniform of that
step's block.  A run is therefore reproducible from ``(seed, step, player)``
alone, independent of how the players are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import Trajectory
from .lattice import PopulationState, tv_distance
from .model import GameSpec
from .population import transition_matrix
from .solver import best_response

__all__ = [
    "SimConfig",
    "FiniteTrajectory",
    "Comparison",
    "player_uniforms",
    "simulate_finite_mld",
    "compare_to_meanfield",
]


@dataclass
class SimConfig:
    players: int
    steps: int
    seed: int
    game: GameSpec
    direction: str = "lower"
    dp_tol: float = 1e-4

    def __post_init__(self):
        if self.players < 2:
            raise ValueError("need at least two players")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.direction not in ("lower", "upper"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.game.coupling != "state":
            raise ValueError("finite simulation supports state-coupled games only")


@dataclass(eq=False)
class FiniteTrajectory:
    """Empirical population states ``f_0..f_T`` of an ``m``-player run."""

    players: int
    empirical: list = field(default_factory=list)
    tv_steps: list = field(default_factory=list)
    final_states: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.tv_steps)


@dataclass
class Comparison:
    series: np.ndarray
    max: float
    final: float


def player_uniforms(seed: int, step: int, players: int) -> np.ndarray:
    """Uniforms on [0, 1) for every player at one step."""
    bitgen = np.random.Philox(key=[seed, 0], counter=[0, step, 0, 0])
    return np.random.Generator(bitgen).random(players)


def _empirical(states: np.ndarray, grid) -> PopulationState:
    counts = np.bincount(states, minlength=len(grid))
    return PopulationState(counts / states.size, grid)


def simulate_finite_mld(cfg: SimConfig) -> FiniteTrajectory:
    """Run ``cfg.steps`` periods of lower/upper myopic learning with ``cfg.players`` players.

    All players share the strategy computed against the empirical
    distribution of the whole population, then move by inverse-CDF sampling
    from their kernel rows.
    """
    game = cfg.game
    grid = game.state_grid
    n = game.n_states
    start = 0 if cfg.direction == "lower" else n - 1
    states = np.full(cfg.players, start, dtype=np.int64)
    f = _empirical(states, grid)
    out = FiniteTrajectory(cfg.players, [f])
    V = None
    for t in range(cfg.steps):
        mu, vf = best_response(f, game, cfg.direction, cfg.dp_tol, V)
        V = vf.values
        cdf_rows = np.cumsum(transition_matrix(mu, f, game), axis=1)
        cdf_rows[:, -1] = 1.0
        u = player_uniforms(cfg.seed, t, cfg.players)
        nxt = (cdf_rows[states] <= u[:, None]).sum(axis=1)
        states = np.minimum(nxt, n - 1)
        f_next = _empirical(states, grid)
        out.tv_steps.append(tv_distance(f_next, f))
        out.empirical.append(f_next)
        f = f_next
    out.final_states = states
    return out


def compare_to_meanfield(fin: FiniteTrajectory, mf: Trajectory) -> Comparison:
    """Per-step total variation between the empirical and mean-field states."""
    if len(fin.empirical) != len(mf.population_states):
        raise ValueError(
            f"trajectory lengths differ: {len(fin.empirical)} vs {len(mf.population_states)}"
        )
    series = np.array([tv_distance(a, b) for a, b in zip(fin.empirical, mf.population_states)])
    return Comparison(series, float(series.max()), float(series[-1]))
