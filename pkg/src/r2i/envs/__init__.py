"""Tabular memory environments."""

from .base import Env, EnvSpec, EpisodeStats, ObsLayout, StepResult, run_episodes
from .registry import ENV_FAMILIES, dump_spec, env_spec, make_env
from .tabular import Autoencode, Concentration, DiscountingChain, MemoryLength, RepeatPrevious


def oracle_policy(env, obs):
    return env.oracle_action()


def memoryless_policy(env, obs):
    return env.memoryless_action(obs)
