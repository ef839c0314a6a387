"""Property-based checks of the invariants each module promises."""
import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from hirelabel.control import CostMatrices, LinearDynamics, linearize_fd, lqg_affine_gains, riccati_gains
from hirelabel.core import HighAction, HighActionKind, RelabeledSample, SeededRng, Transition
from hirelabel.envs import LinearEnv, NonlinearEnv, RoutingEnv, SupplyChainConfig, SupplyChainEnv, sample_demand
from hirelabel.envs import double_integrator, planar_double_integrator
from hirelabel.errors import InvalidHighAction
from hirelabel.inversion import (
    InversionConfig,
    invert_lqr_horizon_analytic,
    invert_numeric_state,
    tracking_rollout,
)
from hirelabel.io import read_transitions, transition_record, write_jsonl
from hirelabel.learn import LearnerConfig, Mlp, awr_train, bc_train
from hirelabel.lp import (
    LpProblem,
    NetworkProblem,
    Status,
    complete_edges,
    flow_balance_targets,
    primal_residual,
    rebalancing_policy,
    solve_lp,
    star_edges,
    supplychain_policy,
)
from hirelabel.control import LqrTracker
from hirelabel.policies import OrderUpToPolicy, default_low_level, episode_rng, hierarchical_expert, order_up_to
from hirelabel.relabel import RelabelConfig, relabel_dataset

FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
SLOW = settings(max_examples=10, deadline=None, suppress_health_check=[HealthCheck.too_slow])

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
seeds = st.integers(0, 2**32 - 1)


def random_system(seed, n, m):
    rng = SeededRng(seed)
    return LinearDynamics(rng.normal(size=(n, n)), rng.normal(size=(n, m)), rng.normal(size=n)), rng


# ---------------------------------------------------------------------------
# core and io


@FAST
@given(dim=st.integers(1, 4), steps=st.integers(1, 6), with_a=st.booleans(), with_r=st.booleans(), data=st.data())
def test_dataset_round_trip(tmp_path_factory, dim, steps, with_a, with_r, data):
    vec = arrays(np.float64, dim, elements=finite)
    trs = [Transition(0, t, s=data.draw(vec), s_next=data.draw(vec), a=data.draw(vec) if with_a else None,
                      r=data.draw(finite) if with_r else None) for t in range(steps)]
    path = tmp_path_factory.mktemp("io") / "d.jsonl"
    write_jsonl(path, (transition_record(tr) for tr in trs))
    assert read_transitions(path) == trs


@settings(max_examples=5, deadline=None)
@given(seeds)
def test_rng_streams_repeat(seed):
    np.testing.assert_array_equal(SeededRng(seed).random(10000), SeededRng(seed).random(10000))


@FAST
@given(arrays(np.float64, st.integers(2, 6), elements=st.floats(0.01, 1.0)), st.floats(-9e-7, 9e-7))
def test_distribution_renormalization(raw, drift):
    p = raw / raw.sum()
    p[0] += drift
    u = HighAction(p, HighActionKind.DISTRIBUTION)
    assert abs(u.values.sum() - 1.0) < 1e-9
    assert np.all(u.values >= 0)


@FAST
@given(arrays(np.float64, st.integers(2, 6), elements=st.floats(0.01, 1.0)), st.floats(2e-6, 0.5))
def test_distribution_far_off_is_rejected(raw, drift):
    p = raw / raw.sum()
    p[0] += drift
    with pytest.raises(InvalidHighAction):
        HighAction(p, HighActionKind.DISTRIBUTION)


# ---------------------------------------------------------------------------
# control


@FAST
@given(seeds, st.integers(1, 4), st.integers(1, 3), st.integers(1, 8))
def test_riccati_value_matrices_psd(seed, n, m, T):
    dyn, rng = random_system(seed, n, m)
    L = rng.normal(size=(n, n))
    g = riccati_gains(dyn, CostMatrices(Q=L @ L.T, R=np.eye(m) * rng.uniform(0.01, 2.0)), T)
    assert g.Ks.shape == (T, m, n)
    np.testing.assert_allclose(g.Ps[T], L @ L.T)
    for P in g.Ps:
        assert np.max(np.abs(P - P.T)) <= 1e-9 * max(1.0, np.abs(P).max())
        assert np.linalg.eigvalsh(P).min() >= -1e-9 * max(1.0, np.abs(P).max())


@FAST
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_closed_loop_contraction(p0, v0, goal, _unused):
    # the target must be at rest: a moving target is not a fixed point of a = K (s - u)
    dyn = double_integrator(0.5)
    K = riccati_gains(dyn, CostMatrices(Q=np.diag([4.0, 1.0]), R=[[0.2]]), 5).Ks[0]
    s, u = np.array([p0, v0]), np.array([goal, 0.0])
    for _ in range(200):
        s = dyn.step(s, K @ (s - u))
        if np.linalg.norm(s - u) < 1e-3:
            break
    assert np.linalg.norm(s - u) < 1e-3


@FAST
@given(seeds)
def test_lqg_stationarity(seed):
    dyn, rng = random_system(seed, 3, 2)
    Lm, Lv = rng.normal(size=(2, 2)), rng.normal(size=(3, 3))
    M, V = Lm @ Lm.T + 0.5 * np.eye(2), Lv @ Lv.T + 0.5 * np.eye(3)
    m_vec, s, u = rng.normal(size=2), rng.normal(size=3), rng.normal(size=3)
    g = lqg_affine_gains(dyn, CostMatrices(M=M, m_vec=m_vec, V=V), s)
    a = g.K @ u + g.k
    resid = M @ (a - m_vec) + dyn.B.T @ V @ (dyn.A @ s + dyn.B @ a + dyn.c - u)
    assert np.max(np.abs(resid)) < 1e-9 * max(1.0, np.abs(M).max() * np.abs(a).max())


@FAST
@given(seeds, st.integers(1, 4), st.integers(1, 3))
def test_linearize_linear_maps(seed, n, m):
    dyn, rng = random_system(seed, n, m)
    lin = linearize_fd(dyn.step, rng.normal(size=n), rng.normal(size=m))
    np.testing.assert_allclose(lin.A, dyn.A, rtol=1e-7, atol=1e-7)
    np.testing.assert_allclose(lin.B, dyn.B, rtol=1e-7, atol=1e-7)
    np.testing.assert_allclose(lin.c, dyn.c, rtol=1e-6, atol=1e-6)


# ---------------------------------------------------------------------------
# inversion


def well_conditioned(seed):
    dyn, rng = random_system(seed, 2, 2)
    dyn = LinearDynamics(0.5 * dyn.A / max(1.0, np.abs(np.linalg.eigvals(dyn.A)).max()), dyn.B, 0.1 * dyn.c)
    tracker = LqrTracker(dyn, CostMatrices(Q=np.eye(2), R=0.1 * np.eye(2)), 3)
    return dyn, tracker, rng


@FAST
@given(seeds)
def test_analytic_round_trip(seed):
    dyn, tracker, rng = well_conditioned(seed)
    s, u0 = rng.uniform(-5, 5, size=2), rng.uniform(-5, 5, size=2)
    s_T = tracking_rollout(dyn, tracker.gains, s, u0)
    res = invert_lqr_horizon_analytic(dyn, tracker.gains, s, s_T)
    assume(not res.rank_deficient)
    np.testing.assert_allclose(tracking_rollout(dyn, tracker.gains, s, res.u), s_T, atol=1e-8)


@SLOW
@given(seeds, st.sampled_from(["GradientDescent", "CEM"]))
def test_numeric_inverse_is_deterministic_and_never_worse(seed, method):
    dyn, tracker, rng = well_conditioned(seed)
    s, s_T = rng.uniform(-5, 5, size=2), rng.uniform(-5, 5, size=2)
    cfg = InversionConfig(method=method, horizon=3, max_steps=300)
    a = invert_numeric_state(tracker, dyn, s, s_T, cfg, SeededRng(seed))
    b = invert_numeric_state(tracker, dyn, s, s_T, cfg, SeededRng(seed))
    np.testing.assert_array_equal(a.u, b.u)
    assert a.loss == b.loss
    assert a.loss <= a.history[0]
    if method == "CEM":
        assert np.all(np.diff(a.history) <= 0)


@SLOW
@given(seeds)
def test_numeric_agrees_with_analytic(seed):
    dyn, tracker, rng = well_conditioned(seed)
    s, s_T = rng.uniform(-5, 5, size=2), rng.uniform(-5, 5, size=2)
    exact = invert_lqr_horizon_analytic(dyn, tracker.gains, s, s_T)
    assume(not exact.rank_deficient and np.abs(exact.u).max() < 20)
    cfg = InversionConfig(method="GradientDescent", horizon=3, early_stop_tol=1e-10)
    num = invert_numeric_state(tracker, dyn, s, s_T, cfg, SeededRng(0))
    assert abs(num.loss - exact.loss) < 1e-4


# ---------------------------------------------------------------------------
# lp


@FAST
@given(seeds, st.integers(1, 3), st.integers(1, 3), st.integers(0, 2))
def test_simplex_matches_vertex_enumeration(seed, n, m_ub, m_eq):
    assume(m_eq <= n)  # the oracle enumerates bases of independent rows
    rng = SeededRng(seed)
    A_ub = rng.uniform(-1, 2, size=(m_ub, n))
    x0 = rng.uniform(0, 2, size=n)
    b_ub = A_ub @ x0 + rng.uniform(0, 1, size=m_ub)
    A_eq = rng.uniform(-1, 2, size=(m_eq, n)) if m_eq else None
    b_eq = A_eq @ x0 if m_eq else None
    c = rng.normal(size=n)
    p = LpProblem(c=c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq)
    sol = solve_lp(p)
    x_ref, v_ref = oracles.vertex_lp(c, A_ub, b_ub, A_eq, b_eq)
    if sol.status is Status.UNBOUNDED:
        return
    assert sol.status is Status.OPTIMAL
    assert x_ref is not None
    assert sol.objective_value == pytest.approx(v_ref, abs=1e-8, rel=1e-8)
    assert primal_residual(p, sol.x) < 1e-7
    dual_obj = b_ub @ sol.duals + (b_eq @ sol.duals_eq if m_eq else 0.0)
    assert abs(sol.objective_value - dual_obj) < 1e-6
    assert np.all(sol.duals <= 1e-9)
    # complementary slackness on the inequality rows
    assert np.max(np.abs(sol.duals * (A_ub @ sol.x - b_ub))) < 1e-6


@FAST
@given(seeds, st.integers(2, 4))
def test_rebalancing_respects_limits_and_round_trips(seed, n):
    rng = SeededRng(seed)
    q = rng.integers(0, 6, size=n).astype(float)
    assume(q.sum() > 0)
    target = rng.multinomial(int(q.sum()), np.ones(n) / n).astype(float)
    edges = complete_edges(n)
    net = NetworkProblem(q=q, edges=edges, cost=rng.uniform(0.5, 3, size=len(edges)), q_target=target)
    dec = rebalancing_policy(net)
    out, inc = net.incidence()
    assert np.all(dec.flows >= -1e-7)
    assert np.all(out @ dec.flows <= q + 1e-7)
    q_hat = flow_balance_targets(net, dec.flows)
    again = rebalancing_policy(NetworkProblem(q=q, edges=edges, cost=net.cost, q_target=q_hat))
    assert again.flow_cost == pytest.approx(dec.flow_cost, abs=1e-6)


@FAST
@given(seeds, st.integers(1, 3))
def test_supplychain_lp_respects_hard_limits(seed, stores):
    rng = SeededRng(seed)
    N = stores + 1
    cap = np.concatenate([[50.0], rng.uniform(5, 20, size=stores)])
    # start from a state the environment can reach: nothing already over capacity
    q = np.concatenate([[rng.uniform(0, 20)], rng.uniform(0, 0.8, size=stores) * cap[1:]])
    demand = np.concatenate([[0.0], rng.uniform(0, 10, size=stores)])
    transit = np.concatenate([[rng.uniform(0, 5)], rng.uniform(0, 0.2, size=stores) * cap[1:]])
    net = NetworkProblem(q=q, edges=star_edges((0,), tuple(range(1, N))), cost=np.full(stores, 0.5),
                         q_target=np.concatenate([[0.0], rng.uniform(0, 20, size=stores)]), warehouses=(0,),
                         storage_capacity=cap, production_capacity=np.concatenate([[25.0], np.zeros(stores)]),
                         production_target=np.concatenate([[rng.uniform(0, 40)], np.zeros(stores)]),
                         demand=demand, in_transit=transit)
    dec = supplychain_policy(net)
    f, w = dec.flows, dec.production[0]
    assert np.all(f >= -1e-7) and w >= -1e-7
    assert f.sum() <= q[0] + 1e-7
    assert q[0] - f.sum() + w + transit[0] <= 25.0 + 1e-7
    after = q[1:] - np.minimum(demand[1:], q[1:]) + transit[1:] + f
    assert np.all(after <= cap[1:] + 1e-7)


# ---------------------------------------------------------------------------
# envs and policies


@SLOW
@given(seeds)
def test_routing_conservation_and_determinism(seed):
    env = RoutingEnv()
    traces = []
    for _ in range(2):
        state, _ = env.reset(SeededRng(seed))
        rng = SeededRng(seed).child(7)
        rewards = []
        while not env.done(state):
            u = HighAction(rng.dirichlet(np.ones(env.n_nodes)), HighActionKind.DISTRIBUTION)
            state, _, r = env.step_hierarchical(state, u)
            assert state.idle.sum() + state.in_transit.sum() == env.config.fleet_size
            rewards.append(r)
        traces.append(rewards)
    assert traces[0] == traces[1]


@SLOW
@given(seeds)
def test_supply_chain_lp_control_never_violates(seed):
    env = SupplyChainEnv()  # strict: any breach raises
    state, _ = env.reset(SeededRng(seed))
    rng = SeededRng(seed).child(3)
    while not env.done(state):
        u = HighAction(rng.uniform(0, 40, size=4), HighActionKind.MIXED)
        records = []
        state, _, _ = env.step_hierarchical(state, u, records=records)
        assert records[0].production[0] <= env.config.production_capacity
        assert np.all(state.q >= 0)
        assert np.all(state.q[1:] <= env.capacity[1:] + 1e-9)


@FAST
@given(st.integers(0, 200), seeds)
def test_demand_bounds(t, seed):
    cfg = SupplyChainConfig()
    d = sample_demand(cfg, t, SeededRng(seed))
    assert np.all(d >= 0)
    assert np.all(d <= np.array(cfg.d_max) + np.array(cfg.d_var))


@FAST
@given(seeds)
def test_drag_free_point_mass_matches_linear_env(seed):
    env = NonlinearEnv(kappa=0.0)
    lin = LinearEnv(A=planar_double_integrator(0.5).A, B=planar_double_integrator(0.5).B)
    rng = SeededRng(seed)
    x = y = rng.uniform(-5, 5, size=4)
    for _ in range(20):
        a = rng.uniform(-1, 1, size=2)
        x, y = env.simulator().step(x, a), lin.simulator().step(y, a)
    np.testing.assert_allclose(x, y, atol=1e-9)


@FAST
@given(arrays(np.float64, 3, elements=st.floats(0, 15)), arrays(np.float64, 3, elements=st.floats(0, 15)),
       arrays(np.float64, 3, elements=st.floats(0, 15)))
def test_order_up_to_never_exceeds_its_level(q, transit, levels):
    order = order_up_to(q, transit, levels)
    assert np.all(order >= 0)
    assert np.all((order == 0) | (q + transit + order <= levels + 1e-9))


@SLOW
@given(seeds)
def test_behavior_policies_are_seeded(seed):
    env = SupplyChainEnv()
    pol = OrderUpToPolicy(env, noise_std=3.0)
    _, obs = env.reset(SeededRng(seed))
    assert pol(obs, SeededRng(seed)) == pol(obs, SeededRng(seed))


# ---------------------------------------------------------------------------
# relabel and learn


@SLOW
@given(st.integers(1, 4), st.integers(1, 4), st.floats(0.0, 1.0))
def test_relabel_counts_and_concatenation(n1, n2, noise):
    env = LinearEnv(noise_std=0.05)
    low = default_low_level(env)
    eps = [hierarchical_expert(env, episode_rng(1, e), low, noise_std=noise, episode=e) for e in range(n1 + n2)]
    cfg = RelabelConfig(state_dims=2, loss_threshold=1e-3)
    d1 = [tr for ep in eps[:n1] for tr in ep]
    d2 = [tr for ep in eps[n1:] for tr in ep]

    def run(data):
        try:
            return relabel_dataset(data, low, env.dyn, cfg)
        except Exception:
            return [], None

    both, rep = run(d1 + d2)
    if rep is not None:
        assert rep.retained + rep.dropped == rep.windows
        assert rep.retained <= rep.windows
    parts = run(d1)[0] + run(d2)[0]
    key = lambda s: (s.episode, s.t)
    assert [key(s) for s in sorted(both, key=key)] == [key(s) for s in sorted(parts, key=key)]
    for a, b in zip(sorted(both, key=key), sorted(parts, key=key)):
        np.testing.assert_array_equal(a.u.values, b.u.values)


@FAST
@given(seeds, arrays(np.float64, (5, 3), elements=st.floats(-100, 100)))
def test_softmax_head_on_simplex(seed, X):
    P = Mlp((3, 8, 4), "softmax", SeededRng(seed)).forward(X)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(P >= 0)


def samples(seed, n=48):
    rng = SeededRng(seed)
    S = rng.normal(size=(n, 2))
    U = S @ np.array([[1.0], [-2.0]]) + 0.1 * rng.normal(size=(n, 1))
    return [RelabeledSample(s=s, u=HighAction(u), r=float(rng.normal()), s_next=s + 0.1, episode=i // 8, t=i % 8)
            for i, (s, u) in enumerate(zip(S, U))]


@SLOW
@given(seeds)
def test_small_step_full_batch_loss_is_monotone(seed):
    # Adam is not a descent method; with a small step on a full batch it behaves like one
    _, curve = bc_train(samples(seed), LearnerConfig(batch=48, epochs=100, lr=1e-4, hidden=(8, 8), seed=seed))
    L = np.array([c["loss"] for c in curve])
    assert np.all(np.diff(L) <= 1e-12)


@SLOW
@given(seeds)
def test_awr_with_infinite_temperature_is_bc(seed):
    data = samples(seed)
    bc, _ = bc_train(data, LearnerConfig(epochs=3, batch=16, seed=seed))
    awr, _ = awr_train(data, LearnerConfig(algorithm="AWR", epochs=3, batch=16, seed=seed, temperature=1e300,
                                           value_sweeps=2, value_epochs=1))
    np.testing.assert_array_equal(bc.net.get_flat(), awr.net.get_flat())
