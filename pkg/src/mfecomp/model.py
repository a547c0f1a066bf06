"""Game definitions on finite state and action grids.

Payoffs and kernels are evaluated in bulk: given the conditioning
distribution ``env`` (a population state, or a population action
distribution for action-coupled games) a :class:`GameSpec` produces the
full payoff matrix ``R[x, a]`` and kernel tensor ``K[x, a, x']``.  Scalar
accessors are provided on top for probing and tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .lattice import (
    ActionDistribution,
    ActionGrid,
    Grid,
    Ordering,
    PopulationState,
    StateGrid,
    sd_compare,
)

__all__ = [
    "NoiseSpec",
    "GameSpec",
    "SeparableSpec",
    "SeparableTransform",
    "TypeMember",
    "TypedGameSpec",
    "truncated_linear_rows",
    "linear_truncated_kernel",
    "mixture_kernel",
    "separable_to_standard",
    "infection_probability",
    "build_security_model",
    "security_game",
    "security_typed",
    "build_coordination_model",
    "build_search_model",
]

PayoffFn = Callable[[PopulationState], np.ndarray]
KernelFn = Callable[[PopulationState], np.ndarray]


@dataclass(frozen=True)
class NoiseSpec:
    """Integer-offset noise ``W`` measured in grid steps."""

    support: tuple
    probabilities: tuple

    def __post_init__(self):
        support = tuple(int(s) for s in self.support)
        probs = tuple(float(p) for p in self.probabilities)
        if len(support) != len(probs) or not support:
            raise ValueError("support and probabilities must be nonempty and of equal length")
        if len(set(support)) != len(support):
            raise ValueError("noise support has duplicate offsets")
        if any(p < 0 for p in probs):
            raise ValueError("noise probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"noise probabilities sum to {sum(probs)!r}, not 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def three_point(cls, q_minus: float, q_zero: float, q_plus: float) -> "NoiseSpec":
        return cls((-1, 0, 1), (q_minus, q_zero, q_plus))

    @classmethod
    def deterministic(cls) -> "NoiseSpec":
        return cls((0,), (1.0,))

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.probabilities))


class GameSpec:
    """A stochastic game on finite grids.

    Args:
        state_grid: ordered states.
        action_grid: ordered actions (the union of all feasible sets).
        payoff: ``env -> R`` with ``R[x, a]`` the single-period payoff.
        kernel: ``env -> K`` with ``K[x, a, :]`` the next-state distribution.
        discount: discount factor in (0, 1).
        feasible: boolean mask ``(n_states, n_actions)``; all actions by default.
        coupling: ``"state"`` when ``env`` is a population state over
            ``state_grid``, ``"action"`` when it is a population action
            distribution over ``action_grid``.
        kernel_depends_on_env: set False to evaluate the kernel once.
    """

    def __init__(
        self,
        state_grid: StateGrid,
        action_grid: ActionGrid,
        payoff: PayoffFn,
        kernel: KernelFn,
        discount: float,
        feasible: Optional[np.ndarray] = None,
        coupling: str = "state",
        kernel_depends_on_env: bool = True,
        name: str = "game",
    ):
        if not 0.0 < discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {discount}")
        if coupling not in ("state", "action"):
            raise ValueError(f"unknown coupling {coupling!r}")
        nx, na = len(state_grid), len(action_grid)
        if feasible is None:
            feasible = np.ones((nx, na), dtype=bool)
        feasible = np.array(feasible, dtype=bool)
        if feasible.shape != (nx, na):
            raise ValueError(f"feasible mask has shape {feasible.shape}, expected {(nx, na)}")
        if not feasible.any(axis=1).all():
            raise ValueError("every state needs at least one feasible action")
        lo = feasible.argmax(axis=1)
        hi = na - 1 - feasible[:, ::-1].argmax(axis=1)
        if np.any(np.diff(lo) < 0) or np.any(np.diff(hi) < 0):
            raise ValueError("feasible action sets must be nondecreasing in the state")
        feasible.setflags(write=False)
        self.state_grid = state_grid
        self.action_grid = action_grid
        self.payoff = payoff
        self.kernel = kernel
        self.discount = float(discount)
        self.feasible = feasible
        self.coupling = coupling
        self.kernel_depends_on_env = kernel_depends_on_env
        self.name = name
        self._static_kernel = None
        self._last = None

    def __repr__(self) -> str:
        return (
            f"GameSpec({self.name!r}, states={len(self.state_grid)}, "
            f"actions={len(self.action_grid)}, beta={self.discount}, coupling={self.coupling})"
        )

    @classmethod
    def stationary(cls, state_grid, action_grid, payoff_matrix, kernel_tensor, discount, **kw):
        """Game whose payoff and kernel ignore the population."""
        R = np.asarray(payoff_matrix, dtype=float)
        K = np.asarray(kernel_tensor, dtype=float)
        return cls(
            state_grid, action_grid, lambda env: R, lambda env: K, discount,
            kernel_depends_on_env=False, **kw,
        )

    @property
    def n_states(self) -> int:
        return len(self.state_grid)

    @property
    def n_actions(self) -> int:
        return len(self.action_grid)

    @property
    def env_grid(self) -> Grid:
        return self.state_grid if self.coupling == "state" else self.action_grid

    def feasible_range(self, x: int) -> tuple:
        """Smallest and largest feasible action index at state ``x``."""
        idx = np.flatnonzero(self.feasible[x])
        return int(idx[0]), int(idx[-1])

    def evaluate(self, env: PopulationState) -> tuple:
        """Payoff matrix and kernel tensor against ``env``.

        The most recent evaluation is memoized, so repeated Bellman sweeps
        against one population state reuse the same arrays.
        """
        if env.grid != self.env_grid:
            raise ValueError("conditioning distribution is on the wrong grid")
        key = env.weights.tobytes()
        last = self._last
        if last is not None and last[0] == key:
            return last[1], last[2]
        R = np.asarray(self.payoff(env), dtype=float)
        if R.shape != (self.n_states, self.n_actions):
            raise ValueError(f"payoff returned shape {R.shape}")
        if self.kernel_depends_on_env:
            K = np.asarray(self.kernel(env), dtype=float)
        else:
            if self._static_kernel is None:
                self._static_kernel = np.asarray(self.kernel(env), dtype=float)
            K = self._static_kernel
        if K.shape != (self.n_states, self.n_actions, self.n_states):
            raise ValueError(f"kernel returned shape {K.shape}")
        self._last = (key, R, K)
        return R, K

    def payoff_at(self, x: int, a: int, env: PopulationState) -> float:
        return float(self.evaluate(env)[0][x, a])

    def kernel_at(self, x: int, a: int, env: PopulationState) -> PopulationState:
        return PopulationState(self.evaluate(env)[1][x, a], self.state_grid)

    def lowest_env(self) -> PopulationState:
        cls = PopulationState if self.coupling == "state" else ActionDistribution
        return cls.lowest(self.env_grid)

    def highest_env(self) -> PopulationState:
        cls = PopulationState if self.coupling == "state" else ActionDistribution
        return cls.highest(self.env_grid)


# ---------------------------------------------------------------------------
# kernels


def truncated_linear_rows(targets, noise: NoiseSpec, grid: StateGrid) -> np.ndarray:
    """Next-state distributions of ``target + W`` truncated to the grid.

    ``targets`` are real state values of any shape; the result has one extra
    trailing axis of length ``len(grid)``.  Mass outside the grid is lumped
    on the nearest endpoint and off-grid interior values are split between
    the two neighbouring points by linear interpolation.
    """
    step = grid.step
    t = np.asarray(targets, dtype=float)
    n = len(grid)
    out = np.zeros(t.shape + (n,))
    flat = out.reshape(-1, n)
    rows = np.arange(flat.shape[0])
    base = (t.ravel() - grid.lower) / step
    for offset, prob in zip(noise.support, noise.probabilities):
        if prob == 0.0:
            continue
        pos = np.clip(base + offset, 0.0, n - 1)
        lo = np.floor(pos).astype(int)
        frac = pos - lo
        hi = np.minimum(lo + 1, n - 1)
        np.add.at(flat, (rows, lo), prob * (1.0 - frac))
        np.add.at(flat, (rows, hi), prob * frac)
    return out


def linear_truncated_kernel(A: float, B: float, noise: NoiseSpec, grid: StateGrid):
    """Kernel ``x' = A x + B a + W`` truncated at the grid boundaries.

    Returns a function of state and action *values* (broadcastable arrays)
    giving next-state rows.
    """
    if A < 0 or B < 0:
        raise ValueError("A and B must be nonnegative")
    if not grid.is_equally_spaced():
        raise ValueError("linear kernel needs an equally spaced state grid")

    def rows(x, a):
        return truncated_linear_rows(A * np.asarray(x, float) + B * np.asarray(a, float), noise, grid)

    return rows


def mixture_kernel(q: Callable, F: PopulationState, G: PopulationState):
    """Mixture ``q F + (1 - q) G`` with ``F`` dominating ``G``.

    ``q(x, a, env)`` receives broadcastable arrays of state and action values
    and returns weights in [0, 1].  The result has the same call signature
    and returns next-state rows.
    """
    if sd_compare(F, G) not in (Ordering.EQUAL, Ordering.F_DOMINATES):
        raise ValueError("mixture kernel needs F to stochastically dominate G")
    Fw, Gw = F.weights, G.weights

    def rows(x, a, env):
        w = np.asarray(q(x, a, env), dtype=float)
        if np.any(w < -1e-12) or np.any(w > 1 + 1e-12):
            raise ValueError("mixture weight q left [0, 1]")
        w = np.clip(w, 0.0, 1.0)[..., None]
        return w * Fw + (1.0 - w) * Gw

    return rows


# ---------------------------------------------------------------------------
# separable games


@dataclass(frozen=True, eq=False)
class SeparableSpec:
    """Game with payoff ``v(x, f) - c(a)`` and kernel driven by ``h(x, a)``.

    ``utility(f)`` returns ``v`` for every state; ``cost`` maps action values
    to costs; ``kernel_param`` maps broadcastable state/action values to
    kernel-parameter values; ``param_kernel(h, f)`` returns next-state rows
    for an array of parameter values.
    """

    state_grid: StateGrid
    action_grid: ActionGrid
    discount: float
    utility: Callable[[PopulationState], np.ndarray]
    cost: Callable[[np.ndarray], np.ndarray]
    kernel_param: Callable[[np.ndarray, np.ndarray], np.ndarray]
    param_kernel: Callable[[np.ndarray, PopulationState], np.ndarray]
    payoff_monotone: bool = True
    kernel_f_independent: bool = False
    name: str = "separable"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")
        if not self.payoff_monotone and not self.kernel_f_independent:
            raise ValueError(
                "a utility that is not monotone in the state is only admissible "
                "with a kernel that ignores the population state"
            )

    def h_matrix(self) -> np.ndarray:
        x = self.state_grid.points[:, None]
        a = self.action_grid.points[None, :]
        return np.broadcast_to(np.asarray(self.kernel_param(x, a), dtype=float), (x.size, a.size))

    def cost_vector(self) -> np.ndarray:
        return np.asarray(self.cost(self.action_grid.points), dtype=float)


@dataclass(eq=False)
class SeparableTransform:
    """Result of re-expressing a separable game in kernel-parameter actions.

    Attributes:
        game: the transformed game; its action grid holds the attained
            kernel-parameter values.
        separable: the source specification.
        min_cost: ``C[x, j]``, the cheapest cost reaching parameter ``j`` from
            state ``x`` (``inf`` when unreachable).
        pullback: ``[x, j]`` index of a cheapest original action reaching
            parameter ``j`` from ``x`` (``-1`` when unreachable).
    """

    game: GameSpec
    separable: SeparableSpec
    min_cost: np.ndarray
    pullback: np.ndarray

    @property
    def h_values(self) -> np.ndarray:
        return self.game.action_grid.points

    def pull_back(self, strategy) -> np.ndarray:
        """Original action indices realising a transformed strategy."""
        idx = np.asarray(getattr(strategy, "action_index", strategy), dtype=int)
        acts = self.pullback[np.arange(idx.size), idx]
        if np.any(acts < 0):
            raise ValueError("strategy picks an unreachable kernel parameter")
        return acts


def separable_to_standard(s: SeparableSpec, decimals: int = 12) -> SeparableTransform:
    """Transform a separable game into one whose actions are kernel parameters.

    Parameter values closer than ``10**-decimals`` are merged.
    """
    H = s.h_matrix()
    c = s.cost_vector()
    nx, na = H.shape
    key = np.round(H, decimals)
    h_vals, inverse = np.unique(key, return_inverse=True)
    inverse = inverse.reshape(nx, na)
    nh = h_vals.size
    min_cost = np.full((nx, nh), np.inf)
    pullback = np.full((nx, nh), -1, dtype=int)
    # ascending action scan keeps the smallest cheapest action on ties
    for a in range(na):
        cols = inverse[:, a]
        rows = np.arange(nx)
        better = c[a] < min_cost[rows, cols]
        min_cost[rows[better], cols[better]] = c[a]
        pullback[rows[better], cols[better]] = a
    feasible = pullback >= 0
    if not feasible.any(axis=1).all():
        raise ValueError("empty feasible set at some state")
    action_grid = ActionGrid(h_vals)
    cost_term = np.where(feasible, min_cost, 0.0)

    def payoff(f):
        v = np.asarray(s.utility(f), dtype=float)
        return v[:, None] - cost_term

    def kernel(f):
        rows = np.asarray(s.param_kernel(h_vals, f), dtype=float)
        return np.broadcast_to(rows[None, :, :], (nx, nh, len(s.state_grid)))

    game = GameSpec(
        s.state_grid, action_grid, payoff, kernel, s.discount,
        feasible=feasible, kernel_depends_on_env=not s.kernel_f_independent,
        name=f"{s.name} (kernel-parameter form)",
    )
    return SeparableTransform(game, s, min_cost, pullback)


# ---------------------------------------------------------------------------
# heterogeneous populations


@dataclass(frozen=True, eq=False)
class TypeMember:
    label: str
    game: GameSpec
    mass: float


@dataclass(frozen=True, eq=False)
class TypedGameSpec:
    """Finite population of player types sharing grids and a population state."""

    types: tuple

    def __post_init__(self):
        types = tuple(self.types)
        if not types:
            raise ValueError("need at least one type")
        total = sum(t.mass for t in types)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"type masses sum to {total!r}, not 1")
        if any(t.mass < 0 for t in types):
            raise ValueError("type masses must be nonnegative")
        g0 = types[0].game
        for t in types[1:]:
            if t.game.state_grid != g0.state_grid or t.game.action_grid != g0.action_grid:
                raise ValueError("all types must share state and action grids")
            if t.game.coupling != "state":
                raise ValueError("typed games support state coupling only")
        object.__setattr__(self, "types", types)

    @property
    def state_grid(self) -> StateGrid:
        return self.types[0].game.state_grid

    @property
    def masses(self) -> np.ndarray:
        return np.array([t.mass for t in self.types])


# ---------------------------------------------------------------------------
# built-in models


def infection_probability(x, kappa: float):
    """Probability of a bad event at security level ``x``: ``1 / (1 + kappa x)``."""
    return 1.0 / (1.0 + kappa * np.asarray(x, dtype=float))


def build_security_model(
    kappa: float = 0.05,
    cost: float = 0.05,
    delta: float = 1.0,
    noise: Optional[NoiseSpec] = None,
    beta: float = 0.75,
    max_state: int = 50,
    max_action: int = 25,
) -> SeparableSpec:
    """Interdependent security: states 0..max_state, integer investments.

    Per-period payoff ``-p(x) - delta (1 - p(x)) eta(f) - cost * a`` where
    ``eta(f) = sum_y f(y) p(y)`` and the kernel parameter is ``x + a``.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if cost < 0:
        raise ValueError("cost must be nonnegative")
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    if noise is None:
        noise = NoiseSpec.three_point(0.4, 0.2, 0.4)
    states = StateGrid.integers(0, max_state)
    actions = ActionGrid.integers(0, max_action)
    p = infection_probability(states.points, kappa)

    def utility(f):
        eta = float(p @ f.weights)
        return -p - delta * (1.0 - p) * eta

    def param_kernel(h, f):
        return truncated_linear_rows(h, noise, states)

    return SeparableSpec(
        states, actions, beta,
        utility=utility,
        cost=lambda a: cost * np.asarray(a, dtype=float),
        kernel_param=lambda x, a: np.asarray(x, float) + np.asarray(a, float),
        param_kernel=param_kernel,
        payoff_monotone=True,
        kernel_f_independent=True,
        name="security",
        params=dict(kappa=kappa, cost=cost, delta=delta, beta=beta, noise=noise),
    )


def security_game(**kwargs) -> GameSpec:
    """The security model in kernel-parameter form, ready for the solvers."""
    return separable_to_standard(build_security_model(**kwargs)).game


def security_typed(
    delta_low: float = 0.1,
    delta_high: float = 0.9,
    fraction_low: float = 0.5,
    **kwargs,
) -> TypedGameSpec:
    """Two-type security population split by interaction parameter.

    Types with zero mass are dropped.
    """
    if not 0.0 <= fraction_low <= 1.0:
        raise ValueError("fraction_low must lie in [0, 1]")
    members = []
    for label, delta, mass in (
        ("low", delta_low, fraction_low),
        ("high", delta_high, 1.0 - fraction_low),
    ):
        if mass > 0:
            members.append(TypeMember(label, security_game(delta=delta, **kwargs), mass))
    return TypedGameSpec(tuple(members))


def build_coordination_model(
    A: float = 1.0,
    B: float = 1.0,
    L: int = 3,
    M: int = 10,
    noise: Optional[NoiseSpec] = None,
    beta: float = 0.75,
) -> SeparableSpec:
    """Coordination on the population mean with quadratic action cost.

    States are the integers ``-M..M``, actions ``0..L``.  The utility
    ``-(x - eta(f))**2`` is not monotone in ``x``; this is admissible because
    the kernel ignores the population.
    """
    if B <= 0 or A < 0:
        raise ValueError("need A >= 0 and B > 0")
    if L < 0 or M < 1:
        raise ValueError("need L >= 0 and M >= 1")
    if noise is None:
        noise = NoiseSpec.three_point(0.45, 0.2, 0.35)
    if noise.mean > 1e-12:
        raise ValueError("coordination noise must have nonpositive mean")
    states = StateGrid.integers(-M, M)
    actions = ActionGrid.integers(0, L)
    x = states.points

    def utility(f):
        return -((x - f.mean()) ** 2)

    return SeparableSpec(
        states, actions, beta,
        utility=utility,
        cost=lambda a: np.asarray(a, dtype=float) ** 2,
        kernel_param=lambda xv, av: A * np.asarray(xv, float) + B * np.asarray(av, float),
        param_kernel=lambda h, f: truncated_linear_rows(h, noise, states),
        payoff_monotone=False,
        kernel_f_independent=True,
        name="coordination",
        params=dict(A=A, B=B, L=L, M=M, beta=beta, noise=noise),
    )


def build_search_model(
    x_max: float = 10.0,
    a_max: float = 5.0,
    n_states: int = 11,
    n_actions: int = 6,
    cost: Optional[Sequence[float]] = None,
    F: Optional[PopulationState] = None,
    G: Optional[PopulationState] = None,
    beta: float = 0.75,
) -> GameSpec:
    """Dynamic search with learning, coupled through the action distribution.

    Payoff ``x a eta(alpha) - c(a)``; the next state is drawn from ``F`` with
    probability ``(x + a + eta(alpha)) / (x_max + 2 a_max)`` and from ``G``
    otherwise.  Defaults: ``F`` the top state, ``G`` the bottom state and a
    quadratic cost ``a**2 / 2``.
    """
    if x_max <= 0 or a_max <= 0:
        raise ValueError("x_max and a_max must be positive")
    states = StateGrid.linspace(0.0, x_max, n_states)
    actions = ActionGrid.linspace(0.0, a_max, n_actions)
    xs = states.points[:, None]
    av = actions.points[None, :]
    c = 0.5 * actions.points**2 if cost is None else np.asarray(cost, dtype=float)
    if c.shape != (n_actions,):
        raise ValueError("cost needs one value per action")
    F = PopulationState.highest(states) if F is None else F
    G = PopulationState.lowest(states) if G is None else G

    def q(x, a, alpha):
        return (x + a + alpha.mean()) / (x_max + 2.0 * a_max)

    rows = mixture_kernel(q, F, G)

    def payoff(alpha):
        return xs * av * alpha.mean() - c[None, :]

    def kernel(alpha):
        return rows(xs, av, alpha)

    return GameSpec(states, actions, payoff, kernel, beta, coupling="action", name="search")
