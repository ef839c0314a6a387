import numpy as np
import pytest

import oracles
from hirelabel.core import HighAction, HighActionKind, RelabeledSample, SeededRng
from hirelabel.envs import LinearEnv
from hirelabel.errors import EmptyDataset, IncompatibleModel
from hirelabel.learn import (
    LearnerConfig,
    Mlp,
    awr_weights,
    bc_train,
    evaluate_policy,
    expectile,
    expectile_loss_and_grad,
    load_checkpoint,
    save_checkpoint,
    train,
)
from hirelabel.policies import HoldPolicy, UniformGoalPolicy, WindowGoalSetter, default_low_level


def test_single_linear_layer_gradient_by_hand():
    net = Mlp((2, 1), params=[np.array([[0.5], [-1.0]]), np.array([0.2])])
    x, t = np.array([[1.0, 2.0]]), np.array([[3.0]])
    loss, grads = net.loss_and_grad(x, t)
    pred = 0.5 - 2.0 + 0.2
    assert loss == pytest.approx((pred - 3.0) ** 2)
    np.testing.assert_allclose(grads[0][:, 0], 2 * (pred - 3.0) * x[0])
    assert grads[1][0] == pytest.approx(2 * (pred - 3.0))


@pytest.mark.parametrize("head", ["linear", "softmax"])
@pytest.mark.parametrize("seed", range(4))
def test_gradients_match_finite_differences(head, seed):
    rng = SeededRng(seed)
    net = Mlp((3, 5, 4, 2), head, rng)
    X = rng.normal(size=(7, 3))
    Y = rng.dirichlet(np.ones(2), size=7) if head == "softmax" else rng.normal(size=(7, 2))
    w = rng.uniform(0.5, 2.0, size=7)
    _, grads = net.loss_and_grad(X, Y, w)
    flat = net.get_flat()

    def f(p):
        net.set_flat(p)
        return net.loss_and_grad(X, Y, w)[0]

    num = oracles.numeric_grad(f, flat)
    net.set_flat(flat)
    ana = np.concatenate([g.reshape(-1) for g in grads])
    np.testing.assert_allclose(ana, num, rtol=1e-4, atol=1e-8)


def test_expectile_loss_gradient():
    rng = SeededRng(3)
    net = Mlp((2, 4, 1), rng=rng)
    X, y = rng.normal(size=(9, 2)), rng.normal(size=9)
    _, grads = expectile_loss_and_grad(net, X, y, 0.8)
    flat = net.get_flat()

    def f(p):
        net.set_flat(p)
        return expectile_loss_and_grad(net, X, y, 0.8)[0]

    num = oracles.numeric_grad(f, flat)
    net.set_flat(flat)
    np.testing.assert_allclose(np.concatenate([g.reshape(-1) for g in grads]), num, rtol=1e-4, atol=1e-8)


def test_zero_network_zero_targets():
    net = Mlp((3, 4, 2))
    net.set_flat(np.zeros(net.get_flat().size))
    loss, grads = net.loss_and_grad(np.ones((5, 3)), np.zeros((5, 2)))
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads)


def test_expectile_two_points():
    assert expectile([0.0, 1.0], 0.9) == pytest.approx(0.9)
    assert oracles.expectile([0.0, 1.0], 0.9) == pytest.approx(0.9, abs=1e-6)


def test_expectile_matches_convex_search():
    v = SeededRng(0).normal(size=50)
    for tau in (0.1, 0.5, 0.7, 0.95):
        assert expectile(v, tau) == pytest.approx(oracles.expectile(v, tau), abs=1e-6)
    assert expectile(v, 0.5) == pytest.approx(v.mean())


def samples_from(S, U, kind=HighActionKind.GOAL_STATE, R=None):
    R = np.zeros(len(S)) if R is None else R
    return [RelabeledSample(s=s, u=HighAction(u, kind), r=float(r), s_next=s, episode=0, t=i)
            for i, (s, u, r) in enumerate(zip(S, U, R))]


def test_bc_learns_linear_map():
    rng = SeededRng(0)
    S = rng.uniform(-1, 1, size=(1000, 1))
    pol, curve = bc_train(samples_from(S, 2 * S), LearnerConfig(epochs=200, hidden=(32,), lr=3e-3))
    S_test = rng.uniform(-1, 1, size=(200, 1))
    assert np.mean((pol.predict(S_test) - 2 * S_test) ** 2) < 1e-3
    assert curve[-1]["loss"] < curve[0]["loss"]


def test_bc_memorizes_a_point():
    S = np.tile([[0.5, -1.0]], (50, 1))
    U = np.tile([[3.0, 4.0]], (50, 1))
    pol, _ = bc_train(samples_from(S, U), LearnerConfig(epochs=20))
    np.testing.assert_allclose(pol.predict(S[:1])[0], [3.0, 4.0], atol=1e-4)


def test_distribution_policy_outputs_simplex():
    rng = SeededRng(1)
    S = rng.normal(size=(100, 3))
    U = rng.dirichlet(np.ones(4), size=100)
    pol, _ = bc_train(samples_from(S, U, HighActionKind.DISTRIBUTION), LearnerConfig(epochs=5))
    P = pol.predict(rng.normal(size=(20, 3)))
    np.testing.assert_allclose(P.sum(axis=1), 1.0)
    assert np.all(P >= 0)
    assert pol(S[0]).kind is HighActionKind.DISTRIBUTION


def test_zero_advantage_gives_unit_weights():
    cfg = LearnerConfig()
    R = np.zeros(10)
    V = np.ones(10)
    w = awr_weights(R + (1 - cfg.gamma) * V, V, V, np.zeros(10, dtype=bool), cfg)
    np.testing.assert_allclose(w, 1.0)


def test_high_temperature_gives_unit_weights():
    A = SeededRng(0).normal(size=20)
    w = awr_weights(A, np.zeros(20), np.zeros(20), np.ones(20, dtype=bool), LearnerConfig(temperature=1e12))
    np.testing.assert_allclose(w, 1.0, atol=1e-9)


def test_weights_are_clipped():
    w = awr_weights(np.array([0.0, 1e3]), np.zeros(2), np.zeros(2), np.ones(2, dtype=bool),
                    LearnerConfig(normalize_advantage=False, temperature=1.0, weight_clip=20.0))
    assert w[1] == 20.0


def test_awr_prefers_high_reward_actions():
    rng = SeededRng(2)
    S = rng.uniform(-1, 1, size=(400, 1))
    good = rng.uniform(size=400) < 0.5
    U = np.where(good[:, None], 1.0, -1.0)
    R = np.where(good, 1.0, 0.0)
    cfg = LearnerConfig(algorithm="AWR", epochs=30, temperature=0.3, value_sweeps=5, hidden=(16,))
    awr, curve = train(samples_from(S, U, R=R), cfg)
    bc, _ = train(samples_from(S, U, R=R), LearnerConfig(epochs=30, hidden=(16,)))
    assert "mean_weight" in curve[-1]
    assert awr.predict(S).mean() > bc.predict(S).mean()


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        bc_train([])


def test_training_is_deterministic():
    rng = SeededRng(4)
    data = samples_from(rng.normal(size=(64, 2)), rng.normal(size=(64, 1)))
    a, _ = bc_train(data, LearnerConfig(epochs=3))
    b, _ = bc_train(data, LearnerConfig(epochs=3))
    np.testing.assert_array_equal(a.net.get_flat(), b.net.get_flat())


def test_checkpoint_round_trip(tmp_path):
    rng = SeededRng(5)
    pol, _ = bc_train(samples_from(rng.normal(size=(40, 4)), rng.normal(size=(40, 1))), LearnerConfig(epochs=2))
    path = tmp_path / "m.json"
    save_checkpoint(path, pol, {"seed": 0}, 0)
    loaded = load_checkpoint(path)
    X = rng.normal(size=(10, 4))
    np.testing.assert_array_equal(loaded.predict(X), pol.predict(X))
    with pytest.raises(IncompatibleModel):
        loaded.predict(np.zeros((1, 3)))


def test_expert_self_reference_and_ordering():
    env = LinearEnv()
    low = default_low_level(env)
    expert = WindowGoalSetter(env, low)
    ref = evaluate_policy(expert, env, low, episodes=20, seed=0)
    again = evaluate_policy(expert, env, low, episodes=20, seed=0, reference=ref.mean)
    assert again.normalized == pytest.approx(100.0)
    assert again.returns == ref.returns
    rand = evaluate_policy(UniformGoalPolicy(env), env, low, episodes=50, seed=0)
    full = evaluate_policy(expert, env, low, episodes=50, seed=0)
    assert rand.mean < full.mean
    floor = evaluate_policy(HoldPolicy(env, low), env, low, episodes=20, seed=0)
    shifted = evaluate_policy(expert, env, low, episodes=20, seed=0, reference=ref.mean, floor=floor.mean)
    assert shifted.normalized == pytest.approx(100.0)


def test_learner_config_validation():
    with pytest.raises(ValueError):
        LearnerConfig(expectile=1.0)
    with pytest.raises(ValueError):
        LearnerConfig(temperature=0.0)
    assert LearnerConfig(hidden=[8]).as_dict()["hidden"] == [8]
