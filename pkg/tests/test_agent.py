import numpy as np
import pytest
from factories import random_batch, tiny_ac, tiny_wm
from hypothesis import given
from hypothesis import strategies as st
from oracles.sequential import lambda_returns_explicit

from r2i.agent import AcConfig, Agent, ReturnNorm, lambda_returns, normalize_returns, policy_mode
from r2i.numkit import Tensor, backward, finite_diff_check

# ---------------------------------------------------------------- returns


def test_terminal_return_is_bootstrap():
    out = lambda_returns(np.array([1.0, 2.0]), np.ones(2), np.array([0.0, 0.0, 7.0]))
    assert out[-1] == 7.0


def test_zero_continue_gives_rewards():
    r = np.array([0.3, -1.0, 2.0])
    out = lambda_returns(r, np.zeros(3), np.array([5.0, 5.0, 5.0, 5.0]))
    np.testing.assert_array_equal(out[:3], r)


def test_single_substitution():
    # one step: R_0 = r + gamma c ((1-lam) v_1 + lam R_1) with R_1 = 3 forced via v at the end
    r, v, R_next = 1.0, 2.0, 3.0
    got = r + 0.997 * 1.0 * ((1 - 0.95) * v + 0.95 * R_next)
    assert got == pytest.approx(3.94115, abs=1e-12)
    # the same through the recursion: a 2-step horizon whose tail return equals 3
    out = lambda_returns(np.array([1.0, 3.0 - 0.997 * 3.0]), np.ones(2), np.array([0.0, 2.0, 3.0]))
    assert out[1] == pytest.approx(3.0 - 0.997 * 3.0 + 0.997 * 3.0)
    assert out[0] == pytest.approx(1 + 0.997 * (0.05 * 2.0 + 0.95 * out[1]), abs=1e-12)


@given(st.integers(0, 2**31 - 1), st.integers(1, 15), st.floats(0.0, 1.0), st.floats(0.5, 1.0))
def test_recursion_matches_explicit_sum(seed, horizon, lam, gamma):
    r = np.random.default_rng(seed)
    rew, cont, val = r.normal(size=horizon), r.uniform(size=horizon), r.normal(size=horizon + 1)
    got = lambda_returns(rew, cont, val, gamma, lam)
    np.testing.assert_allclose(got, lambda_returns_explicit(rew, cont, val, gamma, lam), atol=1e-6)


def test_returns_validate_inputs():
    with pytest.raises(ValueError):
        lambda_returns(np.ones(3), np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        lambda_returns(np.ones(2), np.array([0.5, 1.5]), np.ones(3))


def test_return_norm_examples(rng):
    assert ReturnNorm().update(np.full(10, 3.0)) == 1.0
    state = ReturnNorm(decay=0.0)
    state.update(rng.uniform(0, 100, 100000))
    assert state.ema_scale == pytest.approx(90.0, abs=1.0)
    state = ReturnNorm()
    # linear ramp: the 5th-95th percentile range is 0.9 of the span
    state.update(np.linspace(0.0, 100.0 / 9.0, 1001))
    assert state.ema_scale == pytest.approx(0.1)


def test_return_norm_rejects_empty():
    with pytest.raises(ValueError):
        ReturnNorm().update(np.array([]))


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1e4))
def test_divisor_never_amplifies(seed, scale):
    state = ReturnNorm()
    for _ in range(3):
        assert state.update(np.random.default_rng(seed).normal(scale=scale + 1e-9, size=50)) >= 1.0


@given(st.integers(0, 2**31 - 1), st.floats(1.0, 1e3))
def test_scaling_preserves_advantage_signs(seed, k):
    r = np.random.default_rng(seed)
    R, v = r.normal(size=64), r.normal(size=64)
    d1, _ = normalize_returns(R, ReturnNorm())
    d2, _ = normalize_returns(k * R, ReturnNorm())
    np.testing.assert_array_equal(np.sign((R - v) / d1), np.sign(k * (R - v) / d2))


def test_policy_mode_aliases():
    assert policy_mode("hidden") == "hidden_state"
    with pytest.raises(ValueError):
        policy_mode("latent")
    with pytest.raises(ValueError):
        AcConfig(horizon=0)


# ---------------------------------------------------------------- losses

def _uniform_actor(ac):
    ac.actor.out.w.data[:] = 0
    ac.actor.out.b.data[:] = 0


def test_zero_advantage_leaves_entropy_bonus(rng):
    wm = tiny_wm(actions=4)
    ac = tiny_ac(wm)
    _uniform_actor(ac)
    feats = rng.normal(size=(5, 3, wm.feature_size("output_state")))
    loss, m = ac.actor_loss(feats, rng.integers(0, 4, (5, 3)), np.zeros((5, 3)), np.ones((5, 3)))
    assert m["actor_entropy"] == pytest.approx(np.log(4))
    assert float(loss.data) == pytest.approx(-3e-4 * np.log(4))


def test_actor_loss_gradient_two_action_toy():
    wm = tiny_wm(actions=2)
    ac = tiny_ac(wm, entropy_coef=0.1)
    r = np.random.default_rng(0)
    feats = r.normal(size=(4, 3, wm.feature_size("output_state")))
    acts, adv, w = r.integers(0, 2, (4, 3)), r.normal(size=(4, 3)), r.uniform(size=(4, 3))
    for name in ("w", "b"):
        orig = getattr(ac.actor.out, name)

        def fn(q):
            object.__setattr__(ac.actor.out, name, q)
            try:
                return ac.actor_loss(feats, acts, adv, w)[0]
            finally:
                object.__setattr__(ac.actor.out, name, orig)

        assert finite_diff_check(fn, orig) < 1e-4


def test_critic_loss_minimised_at_target(rng):
    wm = tiny_wm()
    ac = tiny_ac(wm, critic_ema_reg=0.0)
    target = ac.twohot.encode(np.array([1.3]))[0]
    ac.critic.out.w.data[:] = 0
    ac.critic.out.b.data[:] = np.log(target + 1e-300)
    feats = rng.normal(size=(1, 2, wm.feature_size("output_state")))
    loss, _ = ac.critic_loss(feats, np.full((1, 2), 1.3), np.ones((1, 2)))
    ent = -np.sum(target[target > 0] * np.log(target[target > 0]))
    assert float(loss.data) == pytest.approx(ent, abs=1e-9)
    ac.critic.out.b.data[:] += rng.normal(scale=0.1, size=target.shape)
    assert float(ac.critic_loss(feats, np.full((1, 2), 1.3), np.ones((1, 2)))[0].data) > ent


def test_losses_do_not_reach_world_model(rng):
    wm = tiny_wm()
    ac = tiny_ac(wm, horizon=3)
    batch = random_batch(rng)
    _, _, aux = wm.loss(batch, rng)
    traj = ac.imagine(wm, aux["z"], aux["h"], aux["x"], batch.cont, rng)
    values = ac.values(traj.feats)
    returns = lambda_returns(traj.rewards, traj.conts, values)
    adv = returns[:-1] - values[:-1]
    a_loss, _ = ac.actor_loss(traj.feats[:-1], traj.actions, adv, ac.weights(traj))
    c_loss, _ = ac.critic_loss(traj.feats[:-1], returns[:-1], ac.weights(traj))
    for loss in (a_loss, c_loss):
        grads = backward(loss, wm.params())
        assert all(np.all(g == 0) for g in grads.values())


def test_critic_ema_update(rng):
    wm = tiny_wm()
    ac = tiny_ac(wm, horizon=2)
    batch = random_batch(rng)
    _, _, aux = wm.loss(batch, rng)
    traj = ac.imagine(wm, aux["z"], aux["h"], aux["x"], batch.cont, rng)
    ema_before = {k: v.data.copy() for k, v in ac.critic_ema_tensors().items()}
    ac.train_step(traj)
    src = ac.critic.params()
    for k, v in ac.critic_ema_tensors().items():
        np.testing.assert_allclose(v.data, 0.98 * ema_before[k] + 0.02 * src[k].data, rtol=1e-12, atol=1e-15)


# ---------------------------------------------------------------- imagination

def test_imagine_horizon_one_shapes(rng):
    wm = tiny_wm()
    ac = tiny_ac(wm)
    batch = random_batch(rng, b=2, t=5)
    _, _, aux = wm.loss(batch, rng)
    traj = ac.imagine(wm, aux["z"], aux["h"], aux["x"], batch.cont, rng, horizon=1)
    assert traj.per_start(traj.rewards).shape == (2, 5, 1)
    assert traj.per_start(traj.z[1:]).shape == (2, 5, 1, 12)
    with pytest.raises(ValueError):
        ac.imagine(wm, aux["z"], aux["h"], aux["x"], batch.cont, rng, horizon=0)


def test_imagine_deterministic_and_rewards_match_heads(rng):
    wm = tiny_wm()
    ac = tiny_ac(wm, horizon=4)
    batch = random_batch(rng)
    _, _, aux = wm.loss(batch, rng)
    t1 = ac.imagine(wm, aux["z"], aux["h"], aux["x"], batch.cont, np.random.default_rng(9))
    t2 = ac.imagine(wm, aux["z"], aux["h"], aux["x"], batch.cont, np.random.default_rng(9))
    np.testing.assert_array_equal(t1.feats, t2.feats)
    np.testing.assert_array_equal(t1.actions, t2.actions)
    heads = wm.heads_forward(Tensor(t1.z[1:]), Tensor(t1.h[1:]))
    np.testing.assert_allclose(t1.rewards, wm.twohot.decode(heads.reward), atol=1e-12)
    np.testing.assert_allclose(t1.conts, 1 / (1 + np.exp(-heads.cont.data)), atol=1e-12)


def test_imagine_start_stride(rng):
    wm = tiny_wm()
    ac = tiny_ac(wm, horizon=2, start_stride=2)
    batch = random_batch(rng, t=6)
    _, _, aux = wm.loss(batch, rng)
    traj = ac.imagine(wm, aux["z"], aux["h"], aux["x"], batch.cont, rng)
    assert traj.batch_shape == (2, 3)


@pytest.mark.parametrize("mode", ["output_state", "hidden_state", "full_state"])
def test_modes_change_only_policy_features(mode, rng):
    wm = tiny_wm()
    ac = tiny_ac(wm, mode)
    agent = Agent(wm, ac)
    obs = random_batch(rng).obs[:, 0]
    _, st_mode = agent.act(obs, np.ones(2), None, None, explore=False)
    ref = wm.observe_step(wm.initial_state(2), obs, np.ones(2), None)
    np.testing.assert_array_equal(st_mode.h, ref.h)
    np.testing.assert_array_equal(st_mode.z, ref.z)
    assert wm.state_features(ref.z, ref.h, ref.x, mode).shape == (2, wm.feature_size(mode))


def test_episode_start_uses_start_state(rng):
    wm = tiny_wm()
    agent = Agent(wm, tiny_ac(wm))
    obs = random_batch(rng).obs[:, 0]
    _, fresh = agent.act(obs, np.ones(2), None, None, explore=False)
    junk = wm.initial_state(2)
    junk.h[:] = 4.0
    junk.z[:] = 1.0
    junk.x.xs[0].real.data[:] = 2.0
    _, reset = agent.act(obs, np.ones(2), junk, None, explore=False)
    np.testing.assert_array_equal(fresh.h, reset.h)


def test_eval_mode_deterministic(rng):
    wm = tiny_wm()
    agent = Agent(wm, tiny_ac(wm))
    seq = random_batch(rng, t=5).obs
    out = []
    for _ in range(2):
        state, acts = None, []
        for t in range(5):
            a, state = agent.act(seq[:, t], np.full(2, float(t == 0)), state, None, explore=False)
            acts.append(a)
        out.append(np.stack(acts))
    np.testing.assert_array_equal(out[0], out[1])


def test_act_rejects_bad_observation():
    wm = tiny_wm()
    with pytest.raises(ValueError):
        Agent(wm, tiny_ac(wm)).act(np.zeros((2, 7)), np.ones(2), None, None)


def _bandit_entropy(coef, seed, steps=150):
    wm = tiny_wm(actions=3)
    ac = tiny_ac(wm, seed=seed, entropy_coef=coef, learning_rate=3e-2)
    r = np.random.default_rng(seed)
    feat = np.ones((1, 32, wm.feature_size("output_state")))
    payoff = np.array([1.0, 0.5, 0.0])
    for _ in range(steps):
        probs = ac.policy_probs(Tensor(feat)).data
        acts = np.array([[r.choice(3, p=p / p.sum()) for p in probs[0]]])
        adv = payoff[acts] - (probs[0] @ payoff).mean()
        loss, _ = ac.actor_loss(feat, acts, adv, np.ones((1, 32)))
        ac.actor_opt.step(backward(loss, ac.actor_opt.params))
    p = ac.policy_probs(Tensor(feat[:, :1])).data[0, 0]
    return float(-(p * np.log(p)).sum())


def test_entropy_bonus_direction():
    for seed in range(3):
        ents = [_bandit_entropy(c, seed) for c in (0.0, 0.3, 3.0)]
        assert ents[0] <= ents[1] + 1e-6 <= ents[2] + 2e-6, ents
