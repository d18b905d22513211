"""String ids for environments, e.g. ``memory_length:30`` or ``repeat_previous:easy``."""

from __future__ import annotations

import json

from .base import Env, EnvSpec
from .tabular import Autoencode, Concentration, DiscountingChain, MemoryLength, RepeatPrevious


def _level(arg: str, levels: dict):
    if arg in levels:
        return levels[arg]
    raise ValueError(f"unknown level {arg!r}; expected one of {sorted(levels)}")


def make_env(env_id: str, seed: int | None = None) -> Env:
    name, _, arg = env_id.partition(":")
    if not arg:
        raise ValueError(f"env id {env_id!r} needs a parameter, e.g. 'memory_length:30'")
    if name == "memory_length":
        return MemoryLength(int(arg), seed)
    if name == "discounting_chain":
        return DiscountingChain(int(arg), seed)
    if name == "repeat_previous":
        k = int(arg) if arg.isdigit() else _level(arg, RepeatPrevious.LEVELS)
        return RepeatPrevious(k, seed)
    if name == "autoencode":
        n = int(arg) if arg.isdigit() else _level(arg, Autoencode.LEVELS)
        return Autoencode(n, seed)
    if name == "concentration":
        if "x" in arg:
            deck, values = (int(v) for v in arg.split("x"))
        else:
            deck, values = _level(arg, Concentration.LEVELS)
        return Concentration(deck, values, seed)
    raise ValueError(f"unknown environment {name!r}")


def env_spec(env_id: str) -> EnvSpec:
    return make_env(env_id, seed=0).spec


def dump_spec(env_id: str) -> str:
    return json.dumps(env_spec(env_id).to_dict(), indent=2, sort_keys=True)


ENV_FAMILIES = ("memory_length", "discounting_chain", "repeat_previous", "autoencode", "concentration")
