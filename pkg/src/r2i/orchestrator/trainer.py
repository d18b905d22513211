"""Training loop, evaluation protocol and checkpoint plumbing."""

from __future__ import annotations

import json
import logging
import math
import pickle
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..agent import ActorCritic, Agent
from ..envs import EnvSpec, make_env
from ..replay import ReplayBuffer, StepRecord
from ..world_model import WorldModel
from .checkpoint import CheckpointMismatch, load_checkpoint, prefixed, save_checkpoint, unprefixed
from .config import RunConfig, split_seeds
from .metrics import MetricsWriter

log = logging.getLogger(__name__)

BSUITE_FAMILIES = ("memory_length", "discounting_chain")


class TrainingAborted(RuntimeError):
    pass


def is_bsuite(env_id: str) -> bool:
    return env_id.partition(":")[0] in BSUITE_FAMILIES


def episode_success(env_id: str, ret: float, spec: EnvSpec) -> bool:
    return ret >= spec.optimal_return - 0.01 * abs(spec.optimal_return)


def build_agent(cfg: RunConfig, spec: EnvSpec, seed) -> Agent:
    rng = np.random.default_rng(seed)
    wm = WorldModel(cfg.wm_config(), spec.obs, spec.num_actions, rng)
    ac_cfg = cfg.ac_config()
    ac = ActorCritic(ac_cfg, wm.feature_size(ac_cfg.policy_input), spec.num_actions, wm.twohot, rng)
    return Agent(wm, ac)


def agent_state(agent: Agent) -> dict[str, np.ndarray]:
    out = prefixed("wm/", agent.wm.state_dict())
    out.update(prefixed("wm_opt/", agent.wm.optimizer.state_dict()))
    out.update(prefixed("ac/", agent.ac.state_dict()))
    out.update(prefixed("actor_opt/", agent.ac.actor_opt.state_dict()))
    out.update(prefixed("critic_opt/", agent.ac.critic_opt.state_dict()))
    out.update(prefixed("ac_extra/", agent.ac.extra_state()))
    return out


def load_agent_state(agent: Agent, arrays: dict[str, np.ndarray]) -> None:
    agent.wm.load_state_dict(unprefixed("wm/", arrays))
    agent.wm.optimizer.load_state_dict(unprefixed("wm_opt/", arrays))
    agent.ac.load_state_dict(unprefixed("ac/", arrays))
    agent.ac.actor_opt.load_state_dict(unprefixed("actor_opt/", arrays))
    agent.ac.critic_opt.load_state_dict(unprefixed("critic_opt/", arrays))
    agent.ac.load_extra_state(unprefixed("ac_extra/", arrays))


class Trainer:
    def __init__(self, cfg: RunConfig, out_dir=None):
        self.cfg = cfg
        self.out = Path(out_dir if out_dir is not None else cfg.out_dir)
        seeds = split_seeds(cfg.seed)
        self.envs = [make_env(cfg.env, int(s.generate_state(1)[0])) for s in seeds["env"].spawn(cfg.workers)]
        self.spec = self.envs[0].spec
        self.agent = build_agent(cfg, self.spec, seeds["init"])
        self.wm, self.ac = self.agent.wm, self.agent.ac
        self.replay = ReplayBuffer(self.spec.obs.raw_size, cfg.replay_capacity)
        self.rngs = {k: np.random.default_rng(seeds[k]) for k in ("sample", "imagine", "act")}
        self.env_steps = 0
        self.grad_steps = 0
        self.episodes = 0
        self.owed = 0.0
        self.nan_streak = 0
        self.latent = None
        self.pending = [env.reset() for env in self.envs]
        self.ep_returns = [0.0] * cfg.workers
        self.recent_returns: list[float] = []
        self.best_mean = -math.inf
        self.last: dict = {}
        self._writer = None
        self._t0 = time.time()
        self._last_write = (self._t0, 0)

    # ------------------------------------------------------------ collection

    def collect(self, steps: int, random_actions: bool = False) -> int:
        """Step every worker in lockstep until at least ``steps`` env steps are taken."""
        taken = 0
        n = self.spec.num_actions
        while taken < steps:
            for i, res in enumerate(self.pending):
                if res.done:
                    self.replay.append(i, StepRecord(res.obs, 0, res.reward, 0.0, False, i))
                    self.recent_returns.append(self.ep_returns[i])
                    self.episodes += 1
                    self.ep_returns[i] = 0.0
                    self.pending[i] = self.envs[i].reset()
            obs = np.stack([r.obs for r in self.pending])
            first = np.array([r.is_first for r in self.pending], dtype=np.float32)
            if random_actions:
                actions = self.rngs["act"].integers(0, n, size=len(self.envs))
            else:
                actions, self.latent = self.agent.act(obs, first, self.latent, self.rngs["act"], explore=True)
            for i, env in enumerate(self.envs):
                res = self.pending[i]
                self.replay.append(i, StepRecord(res.obs, int(actions[i]), res.reward, 1.0, res.is_first, i))
                nxt = env.step(int(actions[i]))
                self.ep_returns[i] += nxt.reward
                self.pending[i] = nxt
            taken += len(self.envs)
            self.env_steps += len(self.envs)
        return taken

    # ------------------------------------------------------------ training

    def train_step(self) -> dict:
        cfg = self.cfg
        batch = self.replay.sample(cfg.batch_size, cfg.batch_length, self.rngs["sample"])
        wm_metrics, aux = self.wm.train_step(batch, self.rngs["sample"])
        metrics = dict(wm_metrics)
        if wm_metrics["wm_skipped"]:
            self.nan_streak += 1
            self._incident({"grad_steps": self.grad_steps, "event": "non-finite world-model loss", **wm_metrics})
            if self.nan_streak >= cfg.max_nan_skips:
                raise TrainingAborted(
                    f"{self.nan_streak} consecutive non-finite world-model steps at grad step {self.grad_steps}"
                )
        else:
            self.nan_streak = 0
            traj = self.ac.imagine(self.wm, aux["z"], aux["h"], aux["x"], batch.cont, self.rngs["imagine"])
            metrics.update(self.ac.train_step(traj))
        self.grad_steps += 1
        self.last = metrics
        if self.grad_steps % cfg.metrics_every == 0:
            self.write_metrics()
        if cfg.checkpoint_every and self.grad_steps % cfg.checkpoint_every == 0:
            self.save()
        return metrics

    def _incident(self, record: dict) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self.out / "incidents.jsonl", "a") as fh:
            fh.write(json.dumps(record, default=float) + "\n")
        log.warning("incident: %s", record)

    def metrics_record(self) -> dict:
        now = time.time()
        t_prev, steps_prev = self._last_write
        mean_ret = float(np.mean(self.recent_returns)) if self.recent_returns else math.nan
        if self.recent_returns:
            self.best_mean = max(self.best_mean, mean_ret)
        if is_bsuite(self.cfg.env):
            success = float(episode_success(self.cfg.env, mean_ret, self.spec)) if self.recent_returns else math.nan
        else:
            success = self.best_mean if math.isfinite(self.best_mean) else math.nan
        rec = {
            "wall_clock": now - self._t0,
            "env_steps": self.env_steps,
            "grad_steps": self.grad_steps,
            "episodes": self.episodes,
            "loss/world": self.last.get("loss/world", math.nan),
            "loss/actor": self.last.get("loss/actor", math.nan),
            "loss/critic": self.last.get("loss/critic", math.nan),
            "kl_dyn": self.last.get("kl_dyn", math.nan),
            "kl_rep": self.last.get("kl_rep", math.nan),
            "grad_norm": self.last.get("grad_norm/world", math.nan),
            "episode_return_mean": mean_ret,
            "success": success,
            "fps": (self.env_steps - steps_prev) / max(now - t_prev, 1e-9),
        }
        for k, v in self.last.items():
            rec.setdefault(k, v)
        rec.update(self.replay.stats())
        self._last_write = (now, self.env_steps)
        self.recent_returns = []
        return rec

    def write_metrics(self) -> dict:
        if self._writer is None:
            self._writer = MetricsWriter(self.out / "metrics.jsonl")
        rec = self.metrics_record()
        self._writer.write(rec)
        return rec

    def run(self) -> dict:
        cfg = self.cfg
        while self.env_steps < cfg.prefill_steps or not self.replay.ready(cfg.batch_length):
            self.collect(cfg.collect_steps, random_actions=True)
        while self.env_steps < cfg.total_env_steps:
            taken = self.collect(cfg.collect_steps)
            self.owed += taken * cfg.train_ratio
            while self.owed >= 1.0:
                self.train_step()
                self.owed -= 1.0
        final = self.write_metrics()
        self.save()
        self.close()
        return final

    def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            self._writer = None
        self.replay.close()

    # ------------------------------------------------------------ checkpoints

    def save(self, path=None) -> Path:
        path = Path(path) if path is not None else self.out / "checkpoint.npz"
        arrays = agent_state(self.agent)
        arrays.update(prefixed("replay/", self.replay.state_dict()))
        runtime = {
            "envs": self.envs,
            "pending": self.pending,
            "latent": self.latent,
            "ep_returns": self.ep_returns,
            "recent_returns": self.recent_returns,
        }
        arrays["runtime"] = np.frombuffer(pickle.dumps(runtime), dtype=np.uint8)
        meta = {
            "fingerprint": self.cfg.fingerprint(),
            "config": self.cfg.to_dict(),
            "counters": {
                "env_steps": self.env_steps,
                "grad_steps": self.grad_steps,
                "episodes": self.episodes,
                "owed": self.owed,
                "nan_streak": self.nan_streak,
                "best_mean": self.best_mean if math.isfinite(self.best_mean) else None,
            },
            "rng": {k: r.bit_generator.state for k, r in self.rngs.items()},
        }
        return save_checkpoint(path, arrays, meta)

    @classmethod
    def resume(cls, path, cfg: RunConfig | None = None, out_dir=None) -> "Trainer":
        """Rebuild a trainer from a checkpoint; ``cfg`` may extend the run budget."""
        arrays, meta = load_checkpoint(path)
        cfg = cfg or RunConfig(**meta["config"])
        if cfg.fingerprint() != meta["fingerprint"]:
            raise CheckpointMismatch(f"{path}: config fingerprint differs from the checkpoint's")
        tr = cls(cfg, out_dir)
        load_agent_state(tr.agent, arrays)
        tr.replay.load_state_dict(unprefixed("replay/", arrays))
        runtime = pickle.loads(arrays["runtime"].tobytes())
        tr.envs = runtime["envs"]
        tr.pending = runtime["pending"]
        tr.latent = runtime["latent"]
        tr.ep_returns = runtime["ep_returns"]
        tr.recent_returns = runtime["recent_returns"]
        c = meta["counters"]
        tr.env_steps, tr.grad_steps, tr.episodes = c["env_steps"], c["grad_steps"], c["episodes"]
        tr.owed, tr.nan_streak = c["owed"], c["nan_streak"]
        tr.best_mean = -math.inf if c["best_mean"] is None else c["best_mean"]
        for k, state in meta["rng"].items():
            tr.rngs[k].bit_generator.state = state
        return tr


def train(cfg: RunConfig, out_dir=None) -> dict:
    return Trainer(cfg, out_dir).run()


@dataclass
class EvalResult:
    """``success`` is the fraction of near-optimal episodes on the bsuite tasks and
    the mean episodic return (max-mean over a single evaluation) elsewhere."""

    mean_return: float
    success: float
    returns: list[float]


def evaluate_agent(agent: Agent, env_id: str, episodes: int, seed: int = 0) -> EvalResult:
    """Greedy rollouts (argmax posterior and action), one episode at a time."""
    env = make_env(env_id, int(split_seeds(seed)["eval"].generate_state(1)[0]))
    returns = []
    for _ in range(episodes):
        res = env.reset()
        state, total = None, 0.0
        while not res.done:
            actions, state = agent.act(res.obs[None], np.array([float(res.is_first)]), state, None, explore=False)
            res = env.step(int(actions[0]))
            total += res.reward
        returns.append(total)
    mean = float(np.mean(returns))
    if is_bsuite(env_id):
        success = float(np.mean([episode_success(env_id, r, env.spec) for r in returns]))
    else:
        success = mean
    return EvalResult(mean, success, returns)


def evaluate(checkpoint, env_id: str | None = None, episodes: int = 100, seed: int = 0) -> EvalResult:
    arrays, meta = load_checkpoint(checkpoint)
    cfg = RunConfig(**meta["config"])
    if env_id is not None and env_id != cfg.env:
        cfg = cfg.replace(env=env_id)
        if cfg.fingerprint() != meta["fingerprint"]:
            raise CheckpointMismatch(
                f"checkpoint was trained on {meta['config']['env']!r}; refusing to evaluate on {env_id!r}"
            )
    spec = make_env(cfg.env, 0).spec
    agent = build_agent(cfg, spec, 0)
    load_agent_state(agent, arrays)
    return evaluate_agent(agent, cfg.env, episodes, seed)
