import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavmec.config import make_config
from uavmec.graphnn import tensor as T
from uavmec.graphnn.graph import random_graph
from uavmec.graphnn.nn import Linear
from uavmec.marl import (Agent, ExhaustedActions, PolicyParams, RewardBreakdown, act_offload,
                         act_velocity, advantage, critic_loss, reward, shared_features)
from uavmec.runner import Learner
from uavmec.sim import StepResult, clip_velocity

from conftest import SMALL_LEARN


def small_cfg(**learn):
    return make_config("desk", {"episode_len": 20.0, "learn": {**SMALL_LEARN, **learn}})


def test_shared_features_examples():
    rng = np.random.default_rng(0)
    lin = Linear(3, 3, rng)
    lin.w.data[...] = 0.0
    h = T.Tensor(np.array([[1.0, -2.0, 3.0]]))
    assert np.all(shared_features(lin, h).data == 0.0)
    lin.w.data[...] = np.eye(3)
    x = np.array([[0.5, 0.0, 7.0]])
    assert np.array_equal(shared_features(lin, T.Tensor(x)).data, x)


def _pinned_velocity_params(mu, log_sigma, v_max=20.0):
    cfg = small_cfg()
    pp = PolicyParams(3, cfg.learn, np.random.default_rng(0))
    last = pp.vel.layers[-1]
    last.w.data[...] = 0.0
    last.b.data[...] = [math.atanh(mu[0] / v_max), math.atanh(mu[1] / v_max), log_sigma, log_sigma]
    return cfg, pp


def test_degenerate_gaussian_returns_mean():
    cfg, pp = _pinned_velocity_params((3.0, 4.0), -50.0)
    f = T.Tensor(np.ones((1, cfg.learn.shared_dim)))
    a, logp, _ = act_velocity(pp, f, np.random.default_rng(1), cfg.v_max, cfg.learn.sigma_min)
    assert a == pytest.approx([3.0, 4.0], abs=1e-2)
    assert np.isfinite(logp.item())


def test_large_velocity_sample_is_clipped_to_vmax():
    cfg, pp = _pinned_velocity_params((19.9, 19.9), math.log(20.0))
    f = T.Tensor(np.ones((1, cfg.learn.shared_dim)))
    rng = np.random.default_rng(2)
    for _ in range(20):
        a, _, _ = act_velocity(pp, f, rng, cfg.v_max)
        if math.hypot(*a) > cfg.v_max:
            assert math.hypot(*clip_velocity(a, cfg.v_max)) == pytest.approx(cfg.v_max)
    assert math.hypot(*clip_velocity((30.0, 40.0), 20.0)) == pytest.approx(20.0)


def test_velocity_logprob_matches_density():
    cfg, pp = _pinned_velocity_params((-5.0, 2.0), math.log(1.7))
    f = T.Tensor(np.ones((1, cfg.learn.shared_dim)))
    a, logp, ent = act_velocity(pp, f, np.random.default_rng(3), cfg.v_max)
    dens = 1.0
    for x, m in zip(a, (-5.0, 2.0)):
        dens *= math.exp(-0.5 * ((x - m) / 1.7) ** 2) / (1.7 * math.sqrt(2 * math.pi))
    assert logp.item() == pytest.approx(math.log(dens), rel=1e-10)
    assert ent.item() == pytest.approx(2 * (math.log(1.7) + 0.5 * math.log(2 * math.pi * math.e)))


def test_offload_examples():
    rng = np.random.default_rng(0)
    slot, logp, _ = act_offload(T.Tensor(np.array([[0.3, 9.0, -1.0]])), [False, False, True], rng)
    assert slot == 2 and logp.item() == 0.0
    _, logp, ent = act_offload(T.Tensor(np.zeros((1, 4))), [True] * 4, rng)
    assert math.exp(logp.item()) == pytest.approx(0.25)
    assert ent.item() == pytest.approx(math.log(4))
    lp = T.masked_log_softmax(T.Tensor(np.array([[math.log(3.0), 0.0]])), np.array([[True, True]]))
    assert np.exp(lp.data[0]) == pytest.approx([0.75, 0.25], rel=1e-12)
    with pytest.raises(ExhaustedActions):
        act_offload(T.Tensor(np.zeros((1, 2))), [False, False], rng)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.booleans(), min_size=2, max_size=6), st.integers(0, 2**31))
def test_masked_slots_never_sampled(mask, seed):
    if not any(mask):
        return
    rng = np.random.default_rng(seed)
    logits = T.Tensor(rng.normal(size=(1, len(mask))) * 20)
    for _ in range(10):
        slot, logp, _ = act_offload(logits, mask, rng)
        assert mask[slot] and np.isfinite(logp.item())
    probs = np.exp(T.masked_log_softmax(logits, np.array([mask])).data[0]) * np.array(mask)
    assert probs[~np.array(mask)].sum() == 0.0


def _result(k=2, overshoot=0.0, covered=0.0, energy=0.0, served=0.0):
    res = StepResult(np.zeros(k), np.zeros(k), np.zeros(k), np.zeros(k), [])
    res.overshoot[0], res.coverage[0], res.energy[0], res.served_time[0] = overshoot, covered, energy, served
    return res


def test_reward_examples():
    lc = make_config("desk").learn
    rb = reward(0, _result(), lc, 1.0, 80.0)
    assert rb.deadline == 0.0 and rb.coverage == 0.0
    assert reward(0, _result(overshoot=0.5), lc, 1.0, 80.0).deadline == pytest.approx(-5.0)
    assert reward(0, _result(covered=7), lc, 1.0, 80.0).coverage == pytest.approx(0.7)
    rb = reward(0, _result(overshoot=0.3, covered=2, energy=160.0, served=4.0), lc, 1.0, 80.0)
    assert rb.performance == pytest.approx(-(0.5 * 4.0 + 0.5 * 2.0))
    assert rb.total == rb.performance + rb.deadline + rb.coverage
    assert RewardBreakdown(1.0, 2.0, 3.0).total == 6.0


def test_advantage_examples():
    assert advantage(1.0, 2.0, 2.0, 0.95) == pytest.approx(0.9)
    assert advantage(1.0, 1.0, 123.0, 0.95, done=True) == 0.0
    assert advantage(0.0, 0.0, 0.0, 0.95) == 0.0


def test_critic_target_is_stop_gradient():
    v = np.array([[0.5], [-1.0], [2.0]])
    V = T.param(v)
    r, gamma, v_last = np.array([1.0, 0.0, 2.0]), 0.9, 0.7
    loss, adv = critic_loss(V, r, np.zeros(3, bool), v_last, gamma)
    T.backward(loss)
    target = r + gamma * np.array([-1.0, 2.0, 0.7])
    # d/dV_t of mean((V_t - target_t)^2) with targets held fixed
    assert V.grad[:, 0] == pytest.approx(2 * (v[:, 0] - target) / 3, rel=1e-14)
    assert adv == pytest.approx(target - v[:, 0])


def test_two_parameter_actor_gradient_by_hand():
    th1, th2, x, a, A = 0.7, -0.4, 1.3, 0.25, 1.9
    p1, p2 = T.param(np.array([[th1]])), T.param(np.array([[th2]]))
    mu = p1 * x
    logp = T.gaussian_log_prob(np.array([[a]]), mu, p2)
    T.backward(logp * (-A))
    s2 = math.exp(2 * th2)
    # L = -A log N(a; th1 x, exp(th2)^2)
    assert p1.grad[0, 0] == pytest.approx(-A * (a - th1 * x) / s2 * x, rel=1e-6)
    assert p2.grad[0, 0] == pytest.approx(-A * ((a - th1 * x) ** 2 / s2 - 1.0), rel=1e-6)


def _agent(cfg, seed=0):
    ag = Agent(0, cfg, np.random.default_rng(seed), np.random.default_rng(seed + 1))
    graphs = [random_graph(np.random.default_rng(seed + i), 2, 3) for i in range(4)]
    return ag, graphs


def test_zero_advantage_window_leaves_actors_still():
    cfg = small_cfg(entropy_coef=0.0)
    ag, graphs = _agent(cfg)
    crit = ag.params.critic.layers[-1]
    crit.w.data[...] = 0.0
    crit.b.data[...] = 0.0
    before = {n: ag.params.group(n).flat() for n in ("vel", "off")}
    for t, g in enumerate(graphs):
        ag.act(lambda g=g: g, float(t) * 10, (0.0, 0.0))
        ag.record(0.0)
    report = ag.update(0.0)
    assert report["vel"] == 0.0 and report["off"] == 0.0
    for n in ("vel", "off"):
        assert np.array_equal(ag.params.group(n).flat(), before[n])


def test_replay_reproduces_acting_forward():
    cfg = small_cfg()
    ag, graphs = _agent(cfg, 3)
    for t, g in enumerate(graphs):
        ag.act(lambda g=g: g, float(t), (0.0, 0.0))
        ag.record(0.1)
    F, V, mu, _ = ag.replay()
    with T.no_grad():
        f_last = shared_features(ag.params.features.shared, T.Tensor(ag.h))
    assert np.allclose(F.data[-1], f_last.data[0], atol=1e-12)
    assert V.shape == (len(graphs), 1) and mu.shape == (len(graphs), 2)


def test_agent_caches_spatial_embedding_between_refreshes():
    cfg = small_cfg()
    ag, graphs = _agent(cfg)
    calls = []

    def graph_fn():
        calls.append(1)
        return graphs[0]
    for t in range(4):  # dt_base = 2 s at rest: refresh at t = 0 and 2
        ag.act(graph_fn, float(t), (0.0, 0.0))
        ag.record(0.0)
    assert len(calls) == 2


def test_learner_episode_runs_clean():
    cfg = small_cfg()
    lr = Learner(cfg, 0)
    world, sink = lr.episode(0, train=True)
    assert all(v == 0 for v in world.audit.values())
    assert sink.generated > 0
    for ag in lr.agents:
        assert any(np.any(g != 0) for g in ag.last_grads.values())


def test_frozen_episode_changes_nothing():
    cfg = small_cfg()
    lr = Learner(cfg, 1)
    before = [ag.params.flat() for ag in lr.agents]
    lr.episode(0, train=False)
    assert all(np.array_equal(ag.params.flat(), b) for ag, b in zip(lr.agents, before))
