"""Tabular memory environments: two BSuite-style tasks and three POPGym-style tasks."""

from __future__ import annotations

import numpy as np

from .base import Env, EnvSpec, ObsLayout


class MemoryLength(Env):
    """Context sign at t=0, answer it at the last of N steps."""

    def __init__(self, length: int, seed: int | None = None):
        if length < 1:
            raise ValueError(f"length must be >= 1, got {length}")
        super().__init__(seed)
        self.length = length
        self.spec = EnvSpec(
            f"memory_length:{length}", ObsLayout(continuous=2), 2, length,
            optimal_return=1.0, random_return=0.0, reward_bounds=(-1.0, 1.0),
            notes="obs = [context in {-1,0,+1}, t/(N-1)]; answer (context+1)/2 at the final step",
        )

    def _start(self):
        self.context = int(self.rng.choice([-1, 1]))

    def _observe(self):
        t = min(self.t, self.length - 1)
        ctx = self.context if self.t == 0 else 0
        return np.array([ctx, t / max(1, self.length - 1)], dtype=np.float32)

    def _transition(self, action):
        if self.t < self.length - 1:
            return 0.0, False
        return (1.0 if action == (self.context + 1) // 2 else -1.0), True

    def oracle_action(self):
        return (self.context + 1) // 2

    def memoryless_action(self, obs):
        return int(obs[0] > 0)


class DiscountingChain(Env):
    """Only the first action matters; its reward arrives k steps later."""

    OPTIMAL_ACTION = 1

    def __init__(self, delay: int, seed: int | None = None):
        if delay < 1:
            raise ValueError(f"delay must be >= 1, got {delay}")
        super().__init__(seed)
        self.delay = delay
        self.spec = EnvSpec(
            f"discounting_chain:{delay}", ObsLayout(continuous=2), 5, delay + 1,
            optimal_return=1.1, random_return=1.02, reward_bounds=(0.0, 1.1),
            notes="obs = [t/k, start marker]; reward 1.1 at step k if the first action was 1, else 1.0",
        )

    def _start(self):
        self.first_action = None

    def _observe(self):
        t = min(self.t, self.delay)
        return np.array([t / self.delay, 1.0 if self.t == 0 else 0.0], dtype=np.float32)

    def _transition(self, action):
        if self.t == 0:
            self.first_action = action
        if self.t < self.delay:
            return 0.0, False
        return (1.1 if self.first_action == self.OPTIMAL_ACTION else 1.0), True

    def oracle_action(self):
        return self.OPTIMAL_ACTION

    def memoryless_action(self, obs):
        return self.OPTIMAL_ACTION


class RepeatPrevious(Env):
    """Output the observation seen k steps ago."""

    LEVELS = {"easy": 4, "medium": 32, "hard": 64}
    CLASSES = 4

    def __init__(self, k: int, seed: int | None = None):
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        super().__init__(seed)
        self.k = k
        self.length = 2 * k + 48
        scale = 1.0 / (self.length - k)
        self.spec = EnvSpec(
            f"repeat_previous:{k}", ObsLayout(categorical=(self.CLASSES,)), self.CLASSES, self.length,
            optimal_return=1.0, random_return=-0.5, reward_bounds=(-scale, scale),
            notes=f"T = 2k + 48 = {self.length}; reward +-1/(T-k) for t >= k",
        )

    def _start(self):
        self.values = self.rng.integers(0, self.CLASSES, size=self.length)

    def _observe(self):
        return np.array([self.values[min(self.t, self.length - 1)]], dtype=np.float32)

    def _transition(self, action):
        done = self.t == self.length - 1
        if self.t < self.k:
            return 0.0, done
        scale = 1.0 / (self.length - self.k)
        return (scale if action == self.values[self.t - self.k] else -scale), done

    def oracle_action(self):
        return int(self.values[self.t - self.k]) if self.t >= self.k else 0

    def memoryless_action(self, obs):
        return int(obs[0])


class Autoencode(Env):
    """Watch T/2 values, then reproduce them one per step."""

    LEVELS = {"easy": 104, "medium": 208, "hard": 312}
    CLASSES = 4

    def __init__(self, length: int, seed: int | None = None):
        if length < 2 or length % 2:
            raise ValueError(f"length must be a positive even number, got {length}")
        super().__init__(seed)
        self.length = length
        self.half = length // 2
        scale = 2.0 / length
        self.spec = EnvSpec(
            f"autoencode:{length}", ObsLayout(categorical=(2, self.CLASSES + 1)), self.CLASSES, length,
            optimal_return=1.0, random_return=-0.5, reward_bounds=(-scale, scale),
            notes="obs = (phase, value or null=4); recall step j pays +-2/T for repeating value j",
        )

    def _start(self):
        self.values = self.rng.integers(0, self.CLASSES, size=self.half)

    def _observe(self):
        if self.t < self.half:
            return np.array([0, self.values[self.t]], dtype=np.float32)
        return np.array([1, self.CLASSES], dtype=np.float32)

    def _transition(self, action):
        done = self.t == self.length - 1
        if self.t < self.half:
            return 0.0, done
        scale = 2.0 / self.length
        return (scale if action == self.values[self.t - self.half] else -scale), done

    def oracle_action(self):
        return int(self.values[self.t - self.half]) if self.t >= self.half else 0

    def memoryless_action(self, obs):
        return 0


class Concentration(Env):
    """Pairs memory game, one card flip per step; consecutive flips form a pair.

    Observation per card: 0 for face-down, else 1 + its value (pending,
    just-mismatched and matched cards are visible). A pair of equal values
    is matched for +2/deck; a mismatch or a wasted flip (matched card, or the
    pending card again) costs 2/budget.
    """

    LEVELS = {"easy": (52, 2), "medium": (104, 2), "hard": (52, 13)}

    def __init__(self, deck: int, values: int, seed: int | None = None):
        if deck < 2 or deck % (2 * values):
            raise ValueError(f"deck {deck} must split into pairs of {values} values")
        super().__init__(seed)
        self.deck, self.values = deck, values
        self.budget = 2 * deck
        self.spec = EnvSpec(
            f"concentration:{deck}x{values}", ObsLayout(categorical=(values + 1,) * deck), deck,
            self.budget, optimal_return=CONCENTRATION_ORACLE.get((deck, values), float("nan")),
            random_return=CONCENTRATION_RANDOM.get((deck, values), float("nan")),
            reward_bounds=(-2.0 / self.budget, 2.0 / deck),
            notes=f"budget {self.budget} flips; optimal and random returns are frozen Monte-Carlo estimates",
        )

    def _start(self):
        self.cards = self.rng.permutation(np.repeat(np.arange(self.values), self.deck // self.values))
        self.matched = np.zeros(self.deck, dtype=bool)
        self.pending = -1
        self.shown = ()
        self.seen = np.full(self.deck, -1)

    def _observe(self):
        obs = np.where(self.matched, self.cards + 1, 0)
        for i in self.shown:
            obs[i] = self.cards[i] + 1
        if self.pending >= 0:
            obs[self.pending] = self.cards[self.pending] + 1
        return obs.astype(np.float32)

    def _transition(self, action):
        penalty = -2.0 / self.budget
        self.shown = ()
        if self.matched[action] or action == self.pending:
            reward = penalty
            self.pending = -1
        elif self.pending < 0:
            self.pending = action
            reward = 0.0
        else:
            first, self.pending = self.pending, -1
            if self.cards[first] == self.cards[action]:
                self.matched[[first, action]] = True
                reward = 2.0 / self.deck
            else:
                self.shown = (first, action)
                reward = penalty
        for i in (action, self.pending):
            if i >= 0:
                self.seen[i] = self.cards[i]
        done = bool(self.matched.all()) or self.t + 1 >= self.budget
        return reward, done

    def oracle_action(self):
        """Perfect-memory greedy: complete known pairs, otherwise explore unseen cards."""
        open_ = ~self.matched
        known = open_ & (self.seen >= 0)
        unseen = np.flatnonzero(open_ & (self.seen < 0))
        if self.pending >= 0:
            want = self.cards[self.pending]
            cand = np.flatnonzero(known & (self.seen == want))
            cand = cand[cand != self.pending]
            if cand.size:
                return int(cand[0])
            if unseen.size:
                return int(unseen[0])
            others = np.flatnonzero(open_)
            return int(others[others != self.pending][0])
        for v in range(self.values):
            cand = np.flatnonzero(known & (self.seen == v))
            if cand.size >= 2:
                return int(cand[0])
        if unseen.size:
            return int(unseen[0])
        return int(np.flatnonzero(open_)[0])

    def memoryless_action(self, obs):
        """Uniform over face-down cards; never re-flips a visible one."""
        down = np.flatnonzero(np.asarray(obs) == 0)
        if down.size == 0:
            return int(self.rng.integers(self.deck))
        return int(down[self.rng.integers(down.size)])


# frozen Monte-Carlo estimates (see tests/oracles for the generating run)
# 100k episodes per level; standard errors are below 1e-3
CONCENTRATION_ORACLE = {(52, 2): 0.8137098076923073, (104, 2): 0.8130170192307699, (52, 13): 0.6981236538461537}
CONCENTRATION_RANDOM = {(52, 2): -0.39399826923076914, (104, 2): -0.3907756730769234, (52, 13): -0.8637803846153853}
