"""End-to-end acceptance checks on the security model and the validator.

Each test carries a ``criterion`` marker; the conftest hook prints one
PASS/FAIL line per criterion at the end of the session.  Equilibrium
comparisons use tightly converged runs (successive TV below ``LIMIT_TOL``)
so that the compared states are close to the limits they stand for.
"""

import itertools
import time

import numpy as np
import pytest

from mfecomp.cli import collect_violations
from mfecomp.config import load_config
from mfecomp.dynamics import run_brd, run_mld, run_mld_typed
from mfecomp.lattice import (
    TAU_SD,
    ActionGrid,
    Ordering,
    PopulationState,
    StateGrid,
    sd_compare,
    sd_inf,
    sd_leq,
    sd_sup,
    tv_distance,
)
from mfecomp.model import GameSpec, NoiseSpec, security_game, security_typed
from mfecomp.population import invariant_largest, invariant_smallest
from mfecomp.simulate import SimConfig, compare_to_meanfield, simulate_finite_mld
from mfecomp.solver import Strategy, value_iteration
from oracles import (
    compositions,
    dominates_by_expectations,
    enumerate_policy_values,
    random_game_arrays,
    stationary_distribution,
)

LIMIT_TOL = 1e-8
LIMIT_ITERS = 50000
criterion = pytest.mark.criterion


def lower_limit(game):
    traj, res = run_mld(game, "lower", tol=LIMIT_TOL, max_iters=LIMIT_ITERS)
    assert res.converged
    return traj.final


def assert_sd_chain_down(states):
    """Every pair is comparable and later entries are dominated by earlier ones."""
    for i, j in itertools.combinations(range(len(states)), 2):
        assert sd_compare(states[i], states[j]) in (Ordering.EQUAL, Ordering.F_DOMINATES), (i, j)
        assert np.all(states[i].cdf() <= states[j].cdf() + TAU_SD)


@pytest.fixture(scope="module")
def baseline():
    return security_game()


@pytest.fixture(scope="module")
def timed_lower(baseline):
    start = time.perf_counter()
    traj, res = run_mld(baseline, "lower", tol=5e-4, max_iters=1000, dp_tol=1e-4)
    return traj, res, time.perf_counter() - start


@pytest.fixture(scope="module")
def upper(baseline):
    return run_mld(baseline, "upper", tol=5e-4, max_iters=1000, dp_tol=1e-4)


# --- 1


@criterion(1, "baseline L-MLD converges (final step TV < 5e-4 within 1000 iterations, <= 60 s)")
def test_protocol_reproduction(timed_lower):
    traj, res, seconds = timed_lower
    print(f"L-MLD: {len(traj)} iterations, final step TV {traj.tv_steps[-1]:.3g}, {seconds:.2f} s")
    assert res.converged and len(traj) <= 1000
    assert traj.tv_steps[-1] < 5e-4
    assert seconds <= 60.0


# --- 2


@criterion(2, "L-MLD and U-MLD trajectories are monotone with zero violations")
def test_monotone_trajectories(timed_lower, upper):
    for traj, rising in ((timed_lower[0], True), (upper[0], False)):
        assert traj.monotone_violations == 0
        for a, b in zip(traj.population_states, traj.population_states[1:]):
            assert sd_leq(a, b) if rising else sd_leq(b, a)
        for m0, m1 in zip(traj.strategies, traj.strategies[1:]):
            assert m0.dominated_by(m1) if rising else m1.dominated_by(m0)


# --- 3


@criterion(3, "final L-MLD state is dominated by final U-MLD state")
def test_sandwich(timed_lower, upper):
    lo, hi = timed_lower[0].final, upper[0].final
    assert sd_leq(lo, hi)
    assert np.all(lo.cdf() >= hi.cdf() - TAU_SD)


# --- 4


@criterion(4, "L-BRD and L-MLD limits agree within TV 5e-3")
def test_brd_mld_agreement(baseline):
    brd, res = run_brd(baseline, "lower")
    assert res.converged
    gap = tv_distance(brd.final, lower_limit(baseline))
    print(f"TV(L-BRD, L-MLD) = {gap:.3g}")
    assert gap < 5e-3


# --- 5


@criterion(5, "equilibrium CDFs are pointwise nondecreasing in the cost")
def test_cost_comparative_statics():
    states = [lower_limit(security_game(cost=c)) for c in (0.005, 0.01, 0.05)]
    print("means:", [round(f.mean(), 4) for f in states])
    assert_sd_chain_down(states)


# --- 6


@criterion(6, "equilibria are SD-nonincreasing as the drift grows more negative")
def test_drift_comparative_statics():
    tilts = [(0.4, 0.4), (0.45, 0.35), (0.5, 0.3)]
    states = [lower_limit(security_game(noise=NoiseSpec.three_point(qm, 0.2, qp))) for qm, qp in tilts]
    print("means:", [round(f.mean(), 4) for f in states])
    assert_sd_chain_down(states)


# --- 7


@criterion(7, "mean equilibrium state is nondecreasing in the low-delta fraction")
def test_heterogeneity():
    means = []
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        res = run_mld_typed(security_typed(0.1, 0.9, frac, cost=0.05), tol=LIMIT_TOL, max_iters=LIMIT_ITERS)
        assert res.converged
        means.append(res.mixture.mean())
    print("means:", [round(m, 4) for m in means])
    assert all(a <= b + 1e-9 for a, b in zip(means, means[1:]))
    assert means[-1] > means[0]


# --- 8


@pytest.fixture(scope="module")
def finite_player_tv(baseline):
    steps, seeds = 1000, range(10)
    mf, _ = run_mld(baseline, "lower", max_iters=steps, stop_early=False)
    out = {}
    for m in (50, 1000):
        finals = [compare_to_meanfield(simulate_finite_mld(SimConfig(m, steps, s, baseline)), mf).final for s in seeds]
        out[m] = float(np.median(finals))
    print(f"median final TV: m=50 {out[50]:.4f}, m=1000 {out[1000]:.4f}")
    return out


@criterion(8, "finite-player TV: m=1000 below m=50, and below 0.05")
def test_finite_players_improve_with_m(finite_player_tv):
    assert finite_player_tv[1000] < finite_player_tv[50]


@criterion(8, "finite-player TV: m=1000 below m=50, and below 0.05")
def test_finite_players_close_at_m_1000(finite_player_tv):
    assert finite_player_tv[1000] < 0.05


# --- 9


@criterion(9, "oracle suites: value iteration, invariant distributions, lattice laws")
def test_value_iteration_oracle():
    rng = np.random.default_rng(9)
    for _ in range(20):
        nx, na = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        R, K = random_game_arrays(rng, nx, na)
        beta = float(rng.uniform(0.3, 0.95))
        game = GameSpec.stationary(StateGrid.integers(0, nx - 1), ActionGrid.integers(0, na - 1), R, K, beta)
        vf = value_iteration(PopulationState.uniform(game.state_grid), game, tol=1e-11)
        assert np.max(np.abs(vf.values - enumerate_policy_values(R, K, beta))) < 1e-6


@criterion(9, "oracle suites: value iteration, invariant distributions, lattice laws")
def test_invariant_oracle():
    rng = np.random.default_rng(10)
    for n in (2, 5, 17, 40):
        P = rng.dirichlet(np.ones(n), size=n)
        grid = StateGrid.integers(0, n - 1)
        game = GameSpec.stationary(grid, ActionGrid([0.0]), np.zeros((n, 1)), P[:, None, :], 0.5)
        pi = PopulationState(stationary_distribution(P), grid)
        mu, f = Strategy(np.zeros(n, int)), PopulationState.uniform(grid)
        assert tv_distance(invariant_smallest(mu, f, game), pi) < 1e-8
        assert tv_distance(invariant_largest(mu, f, game), pi) < 1e-8


@criterion(9, "oracle suites: value iteration, invariant distributions, lattice laws")
@pytest.mark.parametrize("n", [3, 4, 5])
def test_lattice_oracle(n):
    grid = StateGrid.integers(0, n - 1)
    W = compositions(n, 4)
    dists = [PopulationState(w, grid) for w in W]
    C = np.cumsum(W, axis=1)
    leq = np.all(C[:, None, :] >= C[None, :, :] - TAU_SD, axis=2)
    assert np.array_equal(leq & leq.T, np.eye(len(W), dtype=bool))
    assert np.all(~(leq.astype(int) @ leq.astype(int) > 0) | leq)
    for i, j in itertools.combinations(range(len(W)), 2):
        f, g = dists[i], dists[j]
        assert sd_leq(f, g) == leq[i, j] == dominates_by_expectations(W[j], W[i])
        s, m = sd_sup(f, g), sd_inf(f, g)
        for k in np.flatnonzero(leq[i] & leq[j]):
            assert sd_leq(s, dists[k])
        for k in np.flatnonzero(leq[:, i] & leq[:, j]):
            assert sd_leq(dists[k], m)


# --- 10


@criterion(10, "validator passes security and coordination and flags the two broken models")
def test_validator_discrimination():
    for name in ("security", "coordination"):
        assert collect_violations(load_config(name).build()) == [], name
    raw = collect_violations(load_config("linear_xa_kernel").build())
    sm = [r for r in raw if r.condition == "kernel-supermodular-(x,a)"]
    assert sm and sm[0].witness and sm[0].margin < 0
    print("raw kernel witness:", sm[0].row())
    flipped = collect_violations(load_config("broken_security").build())
    assert any(r.condition == "payoff-increasing-differences-(x,a)-f" for r in flipped)
