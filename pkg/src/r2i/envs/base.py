"""Environment interface, observation layout and spec records."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class ObsLayout:
    """Raw observations are vectors: categorical class indices first, then continuous values."""

    categorical: tuple[int, ...] = ()
    continuous: int = 0

    @property
    def raw_size(self) -> int:
        return len(self.categorical) + self.continuous

    @property
    def encoded_size(self) -> int:
        return sum(self.categorical) + self.continuous

    def groups(self) -> list[tuple[int, np.ndarray]]:
        """Categorical dims grouped by class count: [(classes, dim indices)]."""
        counts = np.asarray(self.categorical, dtype=np.int64)
        return [(int(c), np.flatnonzero(counts == c)) for c in sorted(set(self.categorical))]

    def one_hot(self, raw) -> np.ndarray:
        """(..., raw_size) -> (..., encoded_size) float32."""
        raw = np.asarray(raw)
        if raw.shape[-1] != self.raw_size:
            raise ValueError(f"observation has {raw.shape[-1]} entries, layout expects {self.raw_size}")
        parts = []
        for i, c in enumerate(self.categorical):
            idx = raw[..., i].astype(np.int64)
            if np.any((idx < 0) | (idx >= c)):
                raise ValueError(f"categorical dim {i} out of range [0, {c})")
            parts.append(np.eye(c, dtype=np.float32)[idx])
        if self.continuous:
            parts.append(raw[..., len(self.categorical):].astype(np.float32))
        return np.concatenate(parts, axis=-1)


@dataclass(frozen=True)
class EnvSpec:
    env_id: str
    obs: ObsLayout
    num_actions: int
    max_steps: int
    optimal_return: float
    random_return: float
    reward_bounds: tuple[float, float]
    notes: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["obs"] = {"categorical": list(self.obs.categorical), "continuous": self.obs.continuous}
        d["reward_bounds"] = list(self.reward_bounds)
        return d


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    done: bool
    is_first: bool


class Env:
    """Single-owner episodic environment with seeded, reproducible episodes."""

    spec: EnvSpec

    def __init__(self, seed: int | None = None):
        self.rng = np.random.default_rng(seed)
        self.t = 0
        self._needs_reset = True

    def reset(self) -> StepResult:
        self.t = 0
        self._needs_reset = False
        self._start()
        return StepResult(self._observe(), 0.0, False, True)

    def step(self, action: int) -> StepResult:
        if self._needs_reset:
            raise RuntimeError("episode finished; call reset() first")
        action = int(action)
        if not 0 <= action < self.spec.num_actions:
            raise ValueError(f"action {action} outside [0, {self.spec.num_actions})")
        reward, done = self._transition(action)
        self.t += 1
        if done:
            self._needs_reset = True
        return StepResult(self._observe(), float(reward), bool(done), False)

    def _start(self) -> None:
        raise NotImplementedError

    def _observe(self) -> np.ndarray:
        raise NotImplementedError

    def _transition(self, action: int) -> tuple[float, bool]:
        raise NotImplementedError

    # oracles read hidden state; agents never see these
    def oracle_action(self) -> int:
        raise NotImplementedError

    def memoryless_action(self, obs: np.ndarray) -> int:
        raise NotImplementedError


@dataclass
class EpisodeStats:
    returns: list[float] = field(default_factory=list)
    lengths: list[int] = field(default_factory=list)


def run_episodes(env: Env, policy, episodes: int) -> EpisodeStats:
    """Roll ``policy(env, obs) -> action`` for whole episodes."""
    stats = EpisodeStats()
    for _ in range(episodes):
        res = env.reset()
        total, n = 0.0, 0
        while True:
            res = env.step(policy(env, res.obs))
            total += res.reward
            n += 1
            if res.done:
                break
        stats.returns.append(total)
        stats.lengths.append(n)
    return stats
