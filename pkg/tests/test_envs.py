import json

import numpy as np
import pytest

from r2i.envs import (
    ENV_FAMILIES,
    Autoencode,
    Concentration,
    DiscountingChain,
    MemoryLength,
    RepeatPrevious,
    dump_spec,
    env_spec,
    make_env,
    memoryless_policy,
    oracle_policy,
    run_episodes,
)

CHEAP = ["memory_length:1", "memory_length:7", "discounting_chain:5", "repeat_previous:easy", "autoencode:easy"]
ALL = CHEAP + ["concentration:easy"]


def uniform(seed):
    r = np.random.default_rng(seed)
    return lambda env, obs: int(r.integers(env.spec.num_actions))


@pytest.mark.parametrize("env_id", CHEAP)
def test_oracle_exact(env_id):
    env = make_env(env_id, seed=0)
    stats = run_episodes(env, oracle_policy, 200)
    assert np.allclose(stats.returns, env.spec.optimal_return, atol=1e-9)


@pytest.mark.parametrize("env_id,expected", [
    ("memory_length:5", 0.0), ("discounting_chain:3", 1.02), ("repeat_previous:easy", -0.5), ("autoencode:easy", -0.5),
])
def test_random_policy_expectation(env_id, expected):
    env = make_env(env_id, seed=1)
    r = np.array(run_episodes(env, uniform(2), 10000).returns)
    se = r.std(ddof=1) / np.sqrt(len(r))
    assert abs(r.mean() - expected) < 4 * se + 1e-12
    assert env.spec.random_return == pytest.approx(expected)


@pytest.mark.parametrize("env_id", ALL)
def test_bounds_done_once_and_layout(env_id):
    env = make_env(env_id, seed=3)
    lo, hi = env.spec.reward_bounds
    policy = uniform(4)
    episodes = 10000 if env_id in CHEAP else 500
    for _ in range(episodes):
        res = env.reset()
        assert res.is_first and not res.done
        assert res.obs.shape == (env.spec.obs.raw_size,)
        dones = 0
        for _ in range(env.spec.max_steps):
            res = env.step(policy(env, res.obs))
            assert lo - 1e-12 <= res.reward <= hi + 1e-12
            assert not res.is_first
            env.spec.obs.one_hot(res.obs)  # raises if out of layout
            dones += res.done
            if res.done:
                break
        assert dones == 1
        with pytest.raises(RuntimeError):
            env.step(0)


@pytest.mark.parametrize("env_id", ALL)
def test_same_seed_same_stream(env_id):
    def stream(seed):
        env = make_env(env_id, seed)
        return [(tuple(r.obs), r.reward) for _ in range(3) for r in _episode(env, uniform(0))]

    assert stream(11) == stream(11)


def _episode(env, policy):
    res = env.reset()
    out = [res]
    while not res.done:
        res = env.step(policy(env, res.obs))
        out.append(res)
    return out


def test_action_out_of_range():
    env = make_env("memory_length:3", 0)
    env.reset()
    with pytest.raises(ValueError):
        env.step(2)


# ---------------------------------------------------------------- per-env rules

def test_memory_length_one_is_immediate_recall():
    env = MemoryLength(1, seed=0)
    res = env.reset()
    assert env.step(int(res.obs[0] > 0)).reward == 1.0


def test_memory_length_observations():
    env = MemoryLength(4, seed=0)
    eps = _episode(env, oracle_policy)
    assert eps[0].obs[0] in (-1.0, 1.0)
    assert all(r.obs[0] == 0 for r in eps[1:])
    np.testing.assert_allclose([r.obs[1] for r in eps[:4]], [0, 1 / 3, 2 / 3, 1])
    assert [r.reward for r in eps[1:-1]] == [0.0] * 3
    assert len(eps) - 1 == 4


def test_discounting_chain_rewards():
    env = DiscountingChain(6, seed=0)
    for first, want in ((1, 1.1), (3, 1.0)):
        res = env.reset()
        rewards = [env.step(first).reward] + [env.step(0).reward for _ in range(6)]
        assert rewards[-1] == want and all(r == 0.0 for r in rewards[:-1])
        assert res.obs[1] == 1.0


def test_repeat_previous_length_and_levels():
    assert RepeatPrevious.LEVELS["easy"] == 4
    env = make_env("repeat_previous:easy", 0)
    assert env.spec.max_steps == 2 * 4 + 48
    assert len(_episode(env, oracle_policy)) - 1 == 56


def test_autoencode_lengths_and_phases():
    for level, n in (("easy", 104), ("medium", 208), ("hard", 312)):
        assert make_env(f"autoencode:{level}", 0).spec.max_steps == n
    env = Autoencode(8, seed=0)
    eps = _episode(env, oracle_policy)
    assert [int(r.obs[0]) for r in eps[:8]] == [0] * 4 + [1] * 4
    assert all(int(r.obs[1]) == 4 for r in eps[4:8])
    assert [r.reward for r in eps[1:5]] == [0.0] * 4
    assert sum(r.reward for r in eps) == pytest.approx(1.0)


def test_concentration_match_and_mismatch():
    env = Concentration(4, 2, seed=0)
    env.reset()
    cards = env.cards.copy()
    a = 0
    b = int(np.flatnonzero(cards == cards[a])[1])
    c = int(np.flatnonzero(cards != cards[a])[0])
    assert env.step(a).reward == 0.0
    res = env.step(b)
    assert res.reward == pytest.approx(2 / 4)
    assert env.matched[[a, b]].all()
    assert res.obs[a] == cards[a] + 1 and res.obs[b] == cards[b] + 1
    # flipping a matched card wastes the flip
    assert env.step(a).reward == pytest.approx(-2 / env.budget)
    d = int(np.flatnonzero(cards == cards[c])[1])
    env.step(c)
    res = env.step(d)
    assert res.done and env.matched.all()


def test_concentration_mismatch_shows_then_hides():
    env = Concentration(4, 2, seed=1)
    res = env.reset()
    assert np.all(res.obs == 0)
    cards = env.cards
    a = 0
    b = int(np.flatnonzero(cards != cards[a])[0])
    env.step(a)
    res = env.step(b)
    assert res.reward == pytest.approx(-2 / env.budget)
    assert res.obs[a] > 0 and res.obs[b] > 0
    other = int(np.setdiff1d(np.arange(4), [a, b])[0])
    res = env.step(other)
    assert res.obs[a] == 0 and res.obs[b] == 0


def test_concentration_levels_and_layout():
    for level, (deck, values) in Concentration.LEVELS.items():
        spec = env_spec(f"concentration:{level}")
        assert spec.num_actions == deck
        assert spec.obs.categorical == (values + 1,) * deck
        assert spec.max_steps == 2 * deck
    assert make_env("concentration:52x2", 0).spec.env_id == "concentration:52x2"


def test_concentration_memoryless_beats_random():
    env = make_env("concentration:easy", seed=5)
    n = 2000
    ml = np.array(run_episodes(env, memoryless_policy, n).returns)
    rnd = np.array(run_episodes(env, uniform(6), n).returns)
    se = np.sqrt(ml.var(ddof=1) / n + rnd.var(ddof=1) / n)
    assert ml.mean() - rnd.mean() > 4 * se


def test_registry_errors_and_families():
    assert set(ENV_FAMILIES) == {"memory_length", "discounting_chain", "repeat_previous", "autoencode",
                                 "concentration"}
    for bad in ("memory_length", "nope:3", "repeat_previous:extreme"):
        with pytest.raises(ValueError):
            make_env(bad)


def test_dump_spec_is_structured():
    data = json.loads(dump_spec("repeat_previous:4"))
    assert data["num_actions"] == 4 and data["optimal_return"] == 1.0
    assert data["obs"] == {"categorical": [4], "continuous": 0}
