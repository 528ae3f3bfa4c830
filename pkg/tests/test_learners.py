import math

import numpy as np
import pytest

from gtlo.core import ConfigError, ContractViolation, Experience, LinearWeight, RewardVector, ThresholdPreference
from gtlo.envs import ChainMomdp, DeepSeaTreasure, DstConfig
from gtlo.learners import GTLO, GLinear, OuterLoopGTLO, ReplayBuffer, load_checkpoint, save_checkpoint, tabular_update
from gtlo.learners.networks import SGD, Adam, GeneralizedQNetwork, ScalarQNetwork, clip_by_global_norm
from gtlo.learners.tabular import TabularGeneralizedQ, grid_index
from gtlo.learners.targets import glinear_target, gtlo_loss, gtlo_target, gtlo_targets, huber, scalar_loss
from gtlo.metrics import rollout_returns

INF = math.inf
T3 = ThresholdPreference.from_constraints(3.0)


def exp(terminal, reward=(24.0, -1.0), pref=T3, state=0, nxt=1, action=0):
    return Experience(state, action, None if terminal else nxt, RewardVector(reward), terminal, pref)


# -- targets and losses ---------------------------------------------------------


def test_gtlo_target_terminal_is_reward():
    e = exp(True)
    assert gtlo_target(e, None, 0, 1.0) == 24.0
    assert gtlo_target(e, None, 1, 1.0) == -1.0


def test_gtlo_target_restricted_max():
    e = exp(False, reward=(0.0, -1.0))
    q_next = [[4.0, -2.0], [2.0, -1.0]]
    assert gtlo_target(e, q_next, 1, 1.0) == -3.0
    assert gtlo_target(e, q_next, 0, 1.0) == 4.0


def test_batched_targets_match_single():
    rng = np.random.RandomState(0)
    q_next = rng.normal(0, 3, size=(64, 4, 2))
    t = np.column_stack([rng.normal(0, 3, 64), np.full(64, INF)])
    reward = rng.normal(size=(64, 2))
    terminal = rng.rand(64) < 0.3
    y = gtlo_targets(reward, terminal, q_next, t, np.array([1.0, 0.9]))
    for k in range(64):
        e = Experience(0, 0, None if terminal[k] else 1, RewardVector(reward[k]), bool(terminal[k]),
                       ThresholdPreference(t[k]))
        for i, g in enumerate((1.0, 0.9)):
            assert y[k, i] == pytest.approx(gtlo_target(e, q_next[k], i, g), abs=1e-12)


def test_huber_zones():
    assert huber(np.array(0.5)) == pytest.approx(0.125)
    assert huber(np.array(3.0)) == pytest.approx(2.5)
    assert huber(np.array(-3.0)) == pytest.approx(2.5)


def test_gtlo_loss_zero_residual_and_taken_actions_only():
    q = np.arange(12, dtype=float).reshape(2, 3, 2)
    actions = np.array([1, 2])
    targets = q[np.arange(2), actions]
    loss, d_q = gtlo_loss(q, actions, targets)
    assert loss == 0.0 and not d_q.any()
    loss, d_q = gtlo_loss(q, actions, targets + np.array([[0.5, 0.0], [0.0, 0.0]]))
    assert loss == pytest.approx(0.125 / 2)
    mask = np.zeros_like(q, dtype=bool)
    mask[np.arange(2), actions] = True
    assert not d_q[~mask].any()


def test_gtlo_loss_non_finite_raises():
    from gtlo.core import TrainingDivergence

    q = np.zeros((1, 2, 2))
    with pytest.raises(TrainingDivergence):
        gtlo_loss(q, np.array([0]), np.array([[np.nan, 0.0]]))


@pytest.mark.parametrize(
    "reward, w, terminal, gamma, expected",
    [((124.0, -19.0), (0.5, 0.5), True, 0.9, 52.5), ((1.0, -1.0), (1.0, 0.0), True, 0.9, 1.0),
     ((2.0, -1.0), (0.5, 0.5), False, 0.0, 0.5)],
)
def test_glinear_target(reward, w, terminal, gamma, expected):
    e = Experience(0, 0, None if terminal else 1, RewardVector(reward), terminal, LinearWeight(w))
    assert glinear_target(e, [10.0, 20.0], gamma) == pytest.approx(expected)


# -- gradients ------------------------------------------------------------------


def _loss_of(net, x, t, actions, targets):
    q, _ = net.forward(x, t)
    return gtlo_loss(q, actions, targets)[0]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gtlo_gradient_matches_central_differences(seed):
    rng = np.random.RandomState(seed)
    net = GeneralizedQNetwork(6, 3, 2, [[0.0], [10.0]], trunk=(8,), heads=((8,), (8,)), rng=rng)
    # zero biases can park a pre-activation exactly on a ReLU kink
    net.set_params([p + rng.normal(0, 0.1, p.shape) for p in net.params])
    x = rng.normal(size=(5, 6))
    t = np.column_stack([rng.uniform(0, 10, 5), np.full(5, INF)])
    actions = rng.randint(0, 3, 5)
    q, cache = net.forward(x, t)
    # mix quadratic- and linear-zone residuals
    targets = q[np.arange(5), actions] + rng.normal(0, 1.5, size=(5, 2))
    _, d_q = gtlo_loss(q, actions, targets)
    analytic = np.concatenate([g.ravel() for g in net.backward(cache, d_q)])
    params = [p.copy() for p in net.params]
    numeric = []
    h = 1e-5
    for k, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            plus = [a.copy() for a in params]
            minus = [a.copy() for a in params]
            plus[k][idx] += h
            minus[k][idx] -= h
            net.set_params(plus)
            lp = _loss_of(net, x, t, actions, targets)
            net.set_params(minus)
            lm = _loss_of(net, x, t, actions, targets)
            numeric.append((lp - lm) / (2 * h))
    net.set_params(params)
    numeric = np.array(numeric)
    rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    assert rel < 1e-4


def test_scalar_network_gradient():
    rng = np.random.RandomState(4)
    net = ScalarQNetwork(5, 3, 2, trunk=(8, 8), rng=rng)
    net.set_params([p + rng.normal(0, 0.1, p.shape) for p in net.params])
    x, w = rng.normal(size=(4, 5)), rng.dirichlet([1, 1], size=4)
    actions = rng.randint(0, 3, 4)
    q, cache = net.forward(x, w)
    targets = q[np.arange(4), actions] + rng.normal(0, 1.5, 4)
    _, d_q = scalar_loss(q, actions, targets)
    analytic = np.concatenate([g.ravel() for g in net.backward(cache, d_q)])
    params = [p.copy() for p in net.params]
    numeric, h = [], 1e-5
    for k, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            vals = []
            for sign in (1, -1):
                trial = [a.copy() for a in params]
                trial[k][idx] += sign * h
                net.set_params(trial)
                vals.append(scalar_loss(net.forward(x, w)[0], actions, targets)[0])
            numeric.append((vals[0] - vals[1]) / (2 * h))
    numeric = np.array(numeric)
    assert np.linalg.norm(analytic - numeric) / (np.linalg.norm(analytic) + np.linalg.norm(numeric)) < 1e-4


def test_head_zero_ignores_thresholds():
    rng = np.random.RandomState(0)
    net = GeneralizedQNetwork(10, 4, 2, [[0.5], [100.0]], rng=rng)
    x = rng.normal(size=(7, 10))
    t1 = np.column_stack([rng.uniform(0.5, 100, 7), np.full(7, INF)])
    t2 = t1.copy()
    t2[:, 0] += 13.7
    q1, q2 = net(x, t1), net(x, t2)
    assert np.array_equal(q1[:, :, 0], q2[:, :, 0])
    assert not np.array_equal(q1[:, :, 1], q2[:, :, 1])


def test_clip_and_optimizers():
    grads = [np.full(4, 10.0)]
    clipped = clip_by_global_norm(grads, 10.0)
    assert np.linalg.norm(clipped[0]) == pytest.approx(10.0)
    p = [np.zeros(4)]
    assert np.allclose(SGD(lr=0.1, max_grad_norm=1e9).step(p, [np.ones(4)])[0], -0.1)
    assert np.all(Adam(lr=0.1).step(p, [np.ones(4)])[0] < 0)


# -- tabular --------------------------------------------------------------------


def test_grid_index_exact_bins():
    grid = np.linspace(0.5, 100, 100)
    assert grid_index(grid, grid).tolist() == list(range(100))
    with pytest.raises(ContractViolation):
        grid_index(grid, np.array([1.0]))


def test_tabular_update_full_overwrite_and_zero_step():
    q = TabularGeneralizedQ(3, 2, [np.array([3.0])])
    e = exp(True, reward=(24.0, -1.0), state=2, action=1)
    tabular_update(q, e, 0.0, [1.0, 1.0])
    assert q.tables[0][2, 0, 1] == 0 and q.tables[1][2, 0, 1] == 0
    tabular_update(q, e, 1.0, [1.0, 1.0])
    assert q.tables[0][2, 0, 1] == 24.0 and q.tables[1][2, 0, 1] == -1.0


def test_tabular_update_off_grid_rejected():
    q = TabularGeneralizedQ(3, 2, [np.array([3.0])])
    with pytest.raises(ContractViolation):
        tabular_update(q, exp(True, pref=ThresholdPreference.from_constraints(2.0)), 1.0, [1.0, 1.0])


def test_tabular_update_converges_geometrically():
    q = TabularGeneralizedQ(2, 1, [np.array([3.0])])
    a = exp(False, reward=(0.0, -1.0), state=0, nxt=1)
    b = exp(True, reward=(5.0, -2.0), state=1)
    for _ in range(1000):
        tabular_update(q, b, 0.5, [1.0, 1.0])
        tabular_update(q, a, 0.5, [1.0, 1.0])
    assert abs(q.tables[0][0, 0, 0] - 5.0) < 1e-9
    assert abs(q.tables[1][0, 0, 0] + 3.0) < 1e-9


def test_tabular_head_zero_shared_across_bins():
    q = TabularGeneralizedQ(4, 2, [np.linspace(0, 1, 5)])
    assert q.tables[0].shape == (4, 1, 2) and q.tables[1].shape == (4, 5, 2)


# -- replay and acting ------------------------------------------------------------


def test_replay_grows_and_samples_deterministically():
    buf = ReplayBuffer(2, 2, capacity=2)
    for k in range(10):
        buf.add(k, k % 2, k + 1, (k, -1), k == 9, (1.0, INF))
    assert len(buf) == 10
    assert buf.next_state[9] == -1
    i1 = [buf.sample_indices(8, np.random.RandomState(3)) for _ in range(2)]
    assert np.array_equal(i1[0], i1[1])
    assert buf.batch(np.array([4]))["state"].tolist() == [4]


def _started(est, env):
    est._start(env)
    return est


def test_act_epsilon_one_is_uniform():
    env = DeepSeaTreasure()
    est = _started(GTLO(backend="tabular", random_state=0), env)
    x = est.featurize(env, [env.reset()])[0]
    counts = np.bincount([est.act(x, [0.5, INF], 1.0) for _ in range(10_000)], minlength=4)
    sigma = math.sqrt(10_000 * 0.25 * 0.75)
    assert np.all(np.abs(counts - 2500) <= 3 * sigma)


def test_act_epsilon_zero_is_tlo_selection():
    env = DeepSeaTreasure()
    est = _started(GTLO(backend="tabular", preference_grid=(1.0, 5.0, 5), random_state=0), env)
    est.q_.tables[0][0, 0, :] = [1.0, 9.0, 9.0, 2.0]
    est.q_.tables[1][0, 4, :] = [0.0, -5.0, -3.0, 0.0]
    assert est.act(0, [5.0, INF], 0.0) == 2


def test_glinear_basis_weight_uses_objective_zero():
    env = DeepSeaTreasure()
    est = _started(GLinear(backend="tabular", random_state=0), env)
    b = est.q_.bins(np.array([[1.0, 0.0]]))[0]
    est.q_.table[0, b] = [0.0, 3.0, 1.0, 2.0]
    assert est.act(0, [1.0, 0.0], 0.0) == 1


def test_config_validation_errors():
    env = DeepSeaTreasure()
    with pytest.raises(ConfigError):
        GTLO(backend="gpu").fit(env)
    with pytest.raises(ConfigError):
        GTLO(backend="network", encoding="pixels", total_steps=0).fit(env)
    with pytest.raises(ConfigError):
        GTLO(epsilon_end=2.0).fit(env)


def test_get_params_and_clone():
    from sklearn.base import clone

    est = GTLO(backend="tabular", total_steps=123, random_state=4)
    assert est.get_params()["total_steps"] == 123
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est


def test_zero_steps_evaluates_initial_q():
    env = DeepSeaTreasure()
    seen = []
    GTLO(backend="tabular", total_steps=0, eval_period=10, random_state=0).fit(env, lambda s, e: seen.append(s))
    assert seen == [0]


def test_untrained_policy_is_single_solution():
    env = DeepSeaTreasure()
    est = GTLO(backend="tabular", total_steps=0, random_state=0).fit(env)
    sols = rollout_returns(est, env, est.preferences())
    assert len({r.ret for r in sols}) == 1


def test_seeded_fit_is_reproducible():
    env = DeepSeaTreasure()
    a = GTLO(backend="tabular", total_steps=3000, warmup=200, random_state=9).fit(env)
    b = GTLO(backend="tabular", total_steps=3000, warmup=200, random_state=9).fit(env)
    for ta, tb in zip(a.q_.tables, b.q_.tables):
        assert np.array_equal(ta, tb)


def test_network_fit_smoke_and_target_sync():
    env = DeepSeaTreasure()
    est = GTLO(backend="network", total_steps=400, warmup=100, target_update=200, trunk=(16,),
               heads=((8,), (8,)), random_state=0).fit(env)
    assert len(est.losses_) == 300 * 8
    assert all(np.isfinite(est.losses_))
    for p, q in zip(est.q_.params, est.q_target_.params):
        assert np.array_equal(p, q)  # synced at step 400


# -- checkpoint -------------------------------------------------------------------


def test_checkpoint_roundtrip_and_mismatch(tmp_path):
    env = DeepSeaTreasure()
    est = GTLO(backend="network", total_steps=150, warmup=100, trunk=(16,), heads=((8,), (8,)),
               random_state=0).fit(env)
    path = save_checkpoint(tmp_path / "ck.npz", est, "abc")
    fresh = GTLO(backend="network", total_steps=0, trunk=(16,), heads=((8,), (8,)), random_state=1).fit(env)
    load_checkpoint(path, fresh, "abc")
    for p, q in zip(est.q_.params, fresh.q_.params):
        assert np.array_equal(p, q)
    with pytest.raises(ContractViolation):
        load_checkpoint(path, fresh, "other-hash")
    wrong = GTLO(backend="network", total_steps=0, trunk=(32,), heads=((8,), (8,)), random_state=1).fit(env)
    with pytest.raises(ContractViolation):
        load_checkpoint(path, wrong)
    again = save_checkpoint(tmp_path / "ck2.npz", est, "abc")
    assert path.read_bytes() == again.read_bytes()


def test_tabular_checkpoint_roundtrip(tmp_path):
    env = ChainMomdp()
    est = GTLO(backend="tabular", preference_grid=(0.5, 4.5, 5), total_steps=500, warmup=10,
               random_state=0).fit(env)
    path = save_checkpoint(tmp_path / "tab.npz", est)
    other = GTLO(backend="tabular", preference_grid=(0.5, 4.5, 5), total_steps=0, random_state=0).fit(env)
    load_checkpoint(path, other)
    for a, b in zip(est.q_.tables, other.q_.tables):
        assert np.array_equal(a, b)


# -- outer loop -------------------------------------------------------------------


def test_outer_loop_empty_preference_list():
    env = DeepSeaTreasure()
    est = OuterLoopGTLO(GTLO(backend="tabular"), preferences=[], random_state=0).fit(env)
    assert len(rollout_returns(est, env, est.preferences_list())) == 0


def test_outer_loop_single_low_threshold_finds_first_treasure():
    env = DeepSeaTreasure()
    est = OuterLoopGTLO(GTLO(backend="tabular"), preferences=[[0.5]], per_preference_steps=5000,
                        random_state=0).fit(env)
    sols = rollout_returns(est, env, est.preferences_list())
    assert [r.ret.components for r in sols] == [(1.0, -1.0)]


def test_outer_loop_rejects_unknown_preference():
    env = DeepSeaTreasure()
    est = OuterLoopGTLO(GTLO(backend="tabular"), preferences=[[0.5]], per_preference_steps=10,
                        random_state=0).fit(env)
    with pytest.raises(ContractViolation):
        est.predict(np.array([0]), np.array([[7.0, INF]]))


@pytest.mark.parametrize("outer", [False, True])
@pytest.mark.parametrize("bootstrap", [True, False])
def test_step_limit_is_not_absorbing(outer, bootstrap):
    env = DeepSeaTreasure(DstConfig(max_steps=3))
    inner = GTLO(backend="tabular", total_steps=600, warmup=600, bootstrap_truncated=bootstrap, random_state=0)
    est = OuterLoopGTLO(inner, preferences=[[0.5]], per_preference_steps=600, random_state=0) if outer else inner
    est.fit(env)
    replay = (est.learners_[0] if outer else est).replay_
    n = len(replay)
    term, found = replay.terminal[:n], replay.reward[:n, 0] > 0
    assert found.any() and not found.all()
    assert np.array_equal(term, replay.next_state[:n] == -1)
    if bootstrap:
        assert np.array_equal(term, found)
    else:
        assert term.sum() > found.sum() and term[found].all()
