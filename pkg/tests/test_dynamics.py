import numpy as np
import pytest

from mfecomp.dynamics import check_equilibrium, run_brd, run_mld, run_mld_typed
from mfecomp.lattice import ActionGrid, PopulationState, StateGrid, sd_leq, tv_distance
from mfecomp.model import GameSpec, build_coordination_model, build_search_model, security_game, security_typed
from mfecomp.model import TypeMember, TypedGameSpec, separable_to_standard
from mfecomp.population import invariant_smallest
from mfecomp.solver import Strategy


@pytest.fixture(scope="module")
def security():
    return security_game()


@pytest.fixture(scope="module")
def lower_run(security):
    return run_mld(security, "lower")


@pytest.fixture(scope="module")
def upper_run(security):
    return run_mld(security, "upper")


def small_security(**kw):
    return security_game(max_state=20, max_action=8, **kw)


# --- myopic learning on the baseline


def test_lower_mld_converges_within_protocol(lower_run):
    traj, res = lower_run
    assert res.converged and len(traj) <= 1000
    assert traj.tv_steps[-1] < 5e-4
    assert res.is_equilibrium


def test_mld_trajectories_are_monotone(lower_run, upper_run):
    for (traj, _), direction in ((lower_run, "lower"), (upper_run, "upper")):
        assert traj.monotone_violations == 0
        states, strategies = traj.population_states, traj.strategies
        for a, b in zip(states, states[1:]):
            assert sd_leq(a, b) if direction == "lower" else sd_leq(b, a)
        for mu in strategies:
            assert mu.is_monotone()
        for m0, m1 in zip(strategies, strategies[1:]):
            assert m0.dominated_by(m1) if direction == "lower" else m1.dominated_by(m0)


def test_lower_limit_below_upper_limit(lower_run, upper_run):
    assert sd_leq(lower_run[0].final, upper_run[0].final)
    assert np.all(lower_run[0].final.cdf() >= upper_run[0].final.cdf() - 1e-10)


def test_trajectory_bookkeeping(lower_run):
    traj, _ = lower_run
    assert len(traj.population_states) == len(traj.tv_steps) + 1 == len(traj.strategies) + 1
    for k in (0, 5, len(traj) - 1):
        assert traj.tv_steps[k] == pytest.approx(
            tv_distance(traj.population_states[k + 1], traj.population_states[k])
        )
    assert traj.population_states[0] == PopulationState.lowest(traj.final.grid)


def test_iteration_cap_reports_non_convergence(security):
    traj, res = run_mld(security, max_iters=3)
    assert not res.converged and len(traj) == 3
    traj, res = run_mld(small_security(), max_iters=40, stop_early=False, tol=1.0)
    assert len(traj) == 40 and res.converged


def test_trivial_game_converges_in_one_step():
    states, actions = StateGrid.integers(0, 4), ActionGrid.integers(0, 2)
    K = np.tile(np.eye(5)[:, None, :], (1, 3, 1))
    game = GameSpec.stationary(states, actions, np.ones((5, 3)), K, 0.75)
    traj, res = run_mld(game)
    assert len(traj) == 1 and traj.final == PopulationState.lowest(states)
    assert res.is_equilibrium


def test_direction_is_checked(security):
    with pytest.raises(ValueError):
        run_mld(security, "middle")
    with pytest.raises(ValueError):
        run_mld(security, tol=0.0)


# --- best-response dynamics


def test_brd_lower_trajectory_rises(security):
    traj, res = run_brd(security, "lower")
    assert res.converged and traj.monotone_violations == 0
    for a, b in zip(traj.population_states, traj.population_states[1:]):
        assert sd_leq(a, b)
    assert res.fixed_point_residual < 1e-8 and res.is_equilibrium


def test_brd_and_mld_share_the_lower_limit(security):
    """Run long enough that each computed state approximates its limit."""
    brd, _ = run_brd(security, "lower")
    mld, res = run_mld(security, "lower", tol=1e-9, max_iters=20000)
    assert res.converged
    assert tv_distance(brd.final, mld.final) < 10 * 5e-4


def test_mld_stopping_tolerance_is_not_distance_to_limit(security, lower_run):
    """Successive steps shrink slowly, so the stopping rule leaves a sizeable gap to the limit."""
    brd, _ = run_brd(security, "lower")
    assert tv_distance(brd.final, lower_run[0].final) > 0.1


def test_absorbing_top_reaches_fixed_point_in_one_step():
    states, actions = StateGrid.integers(0, 3), ActionGrid.integers(0, 1)
    K = np.zeros((4, 2, 4))
    K[..., -1] = 1.0
    game = GameSpec.stationary(states, actions, np.zeros((4, 2)), K, 0.5)
    traj, res = run_brd(game)
    assert traj.population_states[1] == PopulationState.highest(states)
    assert res.is_equilibrium


# --- other models


def test_coordination_runs_are_sandwiched():
    game = separable_to_standard(build_coordination_model()).game
    lo, rlo = run_mld(game, "lower", tol=1e-7, max_iters=20000)
    hi, rhi = run_mld(game, "upper", tol=1e-7, max_iters=20000)
    assert rlo.converged and rhi.converged
    assert lo.monotone_violations == 0 and hi.monotone_violations == 0
    assert sd_leq(lo.final, hi.final)


def test_action_coupled_search_dynamics():
    game = build_search_model()
    for direction in ("lower", "upper"):
        traj, res = run_mld(game, direction, tol=1e-8, max_iters=5000)
        assert res.converged and res.is_equilibrium
        assert res.action_distribution is not None
        assert len(traj.action_distributions) == len(traj.population_states)
    _, lo = run_mld(game, "lower", tol=1e-8, max_iters=5000)
    _, hi = run_mld(game, "upper", tol=1e-8, max_iters=5000)
    assert sd_leq(lo.population_state, hi.population_state)
    assert lo.action_distribution.mean() <= hi.action_distribution.mean() + 1e-12


# --- heterogeneous populations


def test_single_type_matches_homogeneous_run():
    game = small_security()
    traj, res = run_mld(game)
    typed = run_mld_typed(TypedGameSpec((TypeMember("only", game, 1.0),)))
    assert typed.iterations == len(traj)
    assert tv_distance(typed.mixture, traj.final) < 1e-12


def test_all_low_fraction_matches_homogeneous_low_delta():
    typed = run_mld_typed(security_typed(0.1, 0.9, 1.0))
    traj, _ = run_mld(security_game(delta=0.1))
    assert tv_distance(typed.mixture, traj.final) < 1e-12


def test_mean_rises_with_low_delta_fraction():
    means = [run_mld_typed(security_typed(0.1, 0.9, fr)).mixture.mean() for fr in (0.0, 0.5, 1.0)]
    assert means[0] <= means[1] <= means[2]


def test_typed_members_report_their_own_residuals():
    res = run_mld_typed(security_typed(0.1, 0.9, 0.5, max_state=20, max_action=8), tol=1e-9, max_iters=20000)
    assert set(res.members) == {"low", "high"}
    mix = 0.5 * res.members["low"].population_state.weights + 0.5 * res.members["high"].population_state.weights
    np.testing.assert_allclose(mix, res.mixture.weights, atol=1e-12)
    for m in res.members.values():
        assert m.is_equilibrium


# --- equilibrium verification


def test_invariant_of_arbitrary_strategy_is_consistent_but_not_optimal(security):
    mu = Strategy(np.arange(security.n_states))  # invest nothing anywhere
    f = invariant_smallest(mu, PopulationState.highest(security.state_grid), security)
    res = check_equilibrium(mu, f, security)
    assert res.fixed_point_residual < 1e-8
    mu_far = Strategy(np.minimum(np.arange(security.n_states) + 25, security.n_actions - 1))
    f_far = invariant_smallest(mu_far, f, security)
    res_far = check_equilibrium(mu_far, f_far, security)
    assert res_far.fixed_point_residual < 1e-8
    assert res_far.optimality_gap > 1e-3 and not res_far.is_equilibrium


def test_moving_mass_down_breaks_the_fixed_point(security):
    _, res = run_brd(security, "lower")
    f = res.population_state
    g = PopulationState(0.95 * f.weights + 0.05 * PopulationState.lowest(f.grid).weights, f.grid)
    assert sd_leq(g, f)
    bad = check_equilibrium(res.strategy, g, security)
    assert bad.fixed_point_residual > 5e-4 and not bad.is_equilibrium
