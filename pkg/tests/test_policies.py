import warnings

import numpy as np
import pytest

from hirelabel.core import HighActionKind, SeededRng
from hirelabel.envs import LinearEnv, NonlinearEnv, RoutingEnv, SupplyChainEnv
from hirelabel.policies import (
    AllZeroForecast,
    HoldPolicy,
    NoOrderPolicy,
    OrderUpToPolicy,
    ProportionalPolicy,
    UniformGoalPolicy,
    WindowGoalSetter,
    default_low_level,
    dirichlet_dispersion,
    episode_rng,
    hierarchical_expert,
    order_up_to,
    order_up_to_grid_search,
    proportional_heuristic,
    run_goal_episode,
    run_network_episode,
    window_optimal_goal,
)
from hirelabel.lp import distribution_to_counts


def test_dirichlet_is_on_simplex_and_seeded():
    a = dirichlet_dispersion(4, SeededRng(0))
    b = dirichlet_dispersion(4, SeededRng(0))
    assert a.kind is HighActionKind.DISTRIBUTION
    assert a.values.sum() == pytest.approx(1.0)
    assert np.all(a.values >= 0)
    assert a == b


def test_dirichlet_is_flat_on_average():
    rng = SeededRng(1)
    draws = np.array([dirichlet_dispersion(4, rng).values for _ in range(4000)])
    np.testing.assert_allclose(draws.mean(axis=0), 0.25, atol=0.01)
    # flat Dirichlet(1,1,1,1) marginals have variance 3 / 80
    np.testing.assert_allclose(draws.var(axis=0), 3 / 80, atol=0.004)


def test_proportional_heuristic():
    u = proportional_heuristic([1.0, 3.0], 8)
    np.testing.assert_allclose(u.values, [0.25, 0.75])
    np.testing.assert_array_equal(distribution_to_counts(u.values, 8), [2, 6])
    np.testing.assert_allclose(proportional_heuristic([2.0, 2.0, 2.0]).values, 1 / 3)


def test_proportional_heuristic_averages_forecast_rows():
    u = proportional_heuristic([[1.0, 0.0], [1.0, 2.0]])
    np.testing.assert_allclose(u.values, [0.5, 0.5])


def test_all_zero_forecast_falls_back_to_uniform():
    with pytest.warns(AllZeroForecast):
        u = proportional_heuristic([0.0, 0.0])
    np.testing.assert_allclose(u.values, [0.5, 0.5])


def test_order_up_to():
    assert order_up_to([4.0], [2.0], [10.0]) == pytest.approx([4.0])
    assert order_up_to([8.0], [3.0], [10.0]) == pytest.approx([0.0])
    with pytest.raises(ValueError):
        order_up_to([0.0], [0.0], [-1.0])


def test_order_up_to_policy_reads_observation():
    env = SupplyChainEnv()
    state, obs = env.reset(SeededRng(0))
    pol = OrderUpToPolicy(env, [10, 12, 14], warehouse_level=25)
    u = pol(obs)
    expected = np.maximum(0, np.array([25, 10, 12, 14]) - state.q - state.in_transit)
    np.testing.assert_allclose(u.values, expected)


def test_noisy_order_up_to_stays_nonnegative():
    env = SupplyChainEnv()
    _, obs = env.reset(SeededRng(0))
    pol = OrderUpToPolicy(env, noise_std=20.0)
    rng = SeededRng(3)
    for _ in range(50):
        assert np.all(pol(obs, rng).values >= 0)


def test_no_order_policy_never_ships():
    env = SupplyChainEnv()
    transitions, _ = run_network_episode(env, NoOrderPolicy(env), SeededRng(0))
    for tr in transitions:
        np.testing.assert_array_equal(tr.a, 0.0)


def test_expert_reaches_goal_without_noise():
    for env in (LinearEnv(), NonlinearEnv()):
        for seed in range(5):
            last = hierarchical_expert(env, SeededRng(seed))[-1]
            n = env.n
            assert np.linalg.norm(last.s_next[:n] - last.s_next[n:]) < 1e-2


def test_expert_is_deterministic_per_seed():
    env = LinearEnv(noise_std=0.05)
    a = hierarchical_expert(env, SeededRng(0), noise_std=0.5)
    b = hierarchical_expert(env, SeededRng(0), noise_std=0.5)
    c = hierarchical_expert(env, SeededRng(1), noise_std=0.5)
    assert a == b
    assert a != c
    assert len(a) == env.episode_length


def test_window_optimal_goal_beats_perturbations():
    env = LinearEnv()
    tracker = default_low_level(env)
    x, goal = np.array([-3.0, 0.5]), np.array([4.0, 0.0])
    u = window_optimal_goal(tracker, x, goal)

    def window_return(uu):
        xx, total = x.copy(), 0.0
        for i in range(5):
            a = tracker(xx, uu, i)
            xx = env.dyn.step(xx, a)
            total += env.reward(xx, goal, a)
        return total

    best = window_return(u)
    for d in (-1.0, -0.1, 0.1, 1.0):
        assert best >= window_return(u + d)


def test_expert_beats_random_goals():
    env = LinearEnv()
    low = default_low_level(env)
    expert = WindowGoalSetter(env, low)
    rand = UniformGoalPolicy(env)
    hold = HoldPolicy(env, low)
    ret = {name: np.mean([run_goal_episode(env, pol, low, episode_rng(0, e))[1] for e in range(20)])
           for name, pol in (("expert", expert), ("random", rand), ("hold", hold))}
    assert ret["expert"] > ret["random"]
    assert ret["expert"] > ret["hold"]


def test_hold_policy_commands_current_position():
    env = LinearEnv()
    low = default_low_level(env)
    _, obs = env.reset(SeededRng(0))
    np.testing.assert_allclose(HoldPolicy(env, low)(obs).values, obs[:1])


def test_proportional_policy_on_routing():
    env = RoutingEnv()
    _, obs = env.reset(SeededRng(0))
    u = ProportionalPolicy(env)(obs)
    expected = env.unpack(obs)["forecast"].mean(axis=0)
    np.testing.assert_allclose(u.values, expected / expected.sum())


def test_grid_search_returns_the_best_entry():
    env = SupplyChainEnv(episode_length=6)
    best, best_mean, table = order_up_to_grid_search(env, levels=(4, 12), episodes=2)
    assert len(table) == 8
    assert best_mean == max(m for _, m in table)
    assert dict(table)[tuple(float(x) for x in best)] == best_mean
