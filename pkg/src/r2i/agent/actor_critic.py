"""Actor-critic trained in imagination, and the acting policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numkit import (
    MLP,
    Adam,
    ComplexPair,
    Module,
    Tensor,
    backward,
    concat,
    log,
    log_softmax,
    mul,
    no_grad,
    softmax,
    sum_,
)
from ..ssm import LayerState
from ..world_model import LatentState, TwoHot, WorldModel, sample_onehot, unimix_probs
from .returns import ReturnNorm, lambda_returns

POLICY_MODES = ("output_state", "hidden_state", "full_state")
MODE_ALIASES = {"output": "output_state", "hidden": "hidden_state", "full": "full_state"}


def policy_mode(name: str) -> str:
    name = MODE_ALIASES.get(name, name)
    if name not in POLICY_MODES:
        raise ValueError(f"unknown policy input {name!r}; expected one of {POLICY_MODES}")
    return name


@dataclass(frozen=True)
class AcConfig:
    policy_input: str = "output_state"
    horizon: int = 15
    gamma: float = 0.997
    lam: float = 0.95
    entropy_coef: float = 3e-4
    critic_ema_decay: float = 0.98
    critic_ema_reg: float = 1.0
    return_norm_decay: float = 0.99
    learning_rate: float = 3e-5
    adam_eps: float = 1e-5
    grad_clip: float = 100.0
    unimix: float = 0.01
    mlp_units: int = 512
    mlp_layers: int = 2
    start_stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "policy_input", policy_mode(self.policy_input))
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.start_stride < 1:
            raise ValueError(f"start_stride must be >= 1, got {self.start_stride}")


@dataclass
class ImaginedTrajectory:
    """Rollouts from M start states, time-major: index 0 is the start state."""

    feats: np.ndarray  # (H+1, M, F) policy/critic inputs
    z: np.ndarray  # (H+1, M, Z)
    h: np.ndarray  # (H+1, M, Hd)
    actions: np.ndarray  # (H, M) int
    rewards: np.ndarray  # (H, M) predicted at states 1..H
    conts: np.ndarray  # (H, M) continue probabilities at states 1..H
    start_cont: np.ndarray  # (M,)
    batch_shape: tuple[int, int]  # (B, T') of the start grid

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    def per_start(self, arr: np.ndarray) -> np.ndarray:
        """(steps, M, ...) -> (B, T', steps, ...)."""
        arr = np.moveaxis(np.asarray(arr), 0, 1)
        return arr.reshape(self.batch_shape + arr.shape[1:])


class ActorCritic(Module):
    def __init__(self, cfg: AcConfig, feat_size: int, num_actions: int, twohot: TwoHot,
                 rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.num_actions = num_actions
        self.twohot = twohot
        self.dtype = dtype
        self.actor = MLP(feat_size, num_actions, cfg.mlp_units, cfg.mlp_layers, rng, dtype)
        self.critic = MLP(feat_size, twohot.size, cfg.mlp_units, cfg.mlp_layers, rng, dtype, zero_out=True)
        self.critic_ema = MLP(feat_size, twohot.size, cfg.mlp_units, cfg.mlp_layers, rng, dtype, zero_out=True)
        for p in self.critic_ema_tensors().values():
            p.requires_grad = False
        self._sync_ema(1.0)
        self.return_norm = ReturnNorm(cfg.return_norm_decay)
        self.actor_opt = Adam(self.actor.params(), cfg.learning_rate, cfg.adam_eps, clip=cfg.grad_clip)
        self.critic_opt = Adam(self.critic.params(), cfg.learning_rate, cfg.adam_eps, clip=cfg.grad_clip)

    # ------------------------------------------------------------ pieces

    def critic_ema_tensors(self) -> dict[str, Tensor]:
        out = {}
        for name, mod in (("hidden", self.critic_ema.hidden), ("norms", self.critic_ema.norms)):
            for i, m in enumerate(mod):
                for k, v in m.__dict__.items():
                    if isinstance(v, Tensor):
                        out[f"{name}.{i}.{k}"] = v
        out["out.w"], out["out.b"] = self.critic_ema.out.w, self.critic_ema.out.b
        return out

    def _sync_ema(self, rate: float) -> None:
        src = self.critic.params()
        for k, p in self.critic_ema_tensors().items():
            p.data = (1.0 - rate) * p.data + rate * src[k].data
            p.data = p.data.astype(self.dtype)

    def policy_probs(self, feats: Tensor) -> Tensor:
        return unimix_probs(self.actor(feats), self.cfg.unimix)

    def select(self, feats: Tensor, rng: np.random.Generator | None) -> np.ndarray:
        probs = self.policy_probs(feats).data
        if rng is None:
            return probs.argmax(axis=-1)
        return sample_onehot(probs, rng).argmax(axis=-1)

    def values(self, feats) -> np.ndarray:
        with no_grad():
            return self.twohot.decode(self.critic(Tensor(np.asarray(feats, self.dtype))))

    # ------------------------------------------------------------ imagination

    def imagine(self, wm: WorldModel, start_z, start_h, start_x, start_cont,
                rng: np.random.Generator, horizon: int | None = None) -> ImaginedTrajectory:
        """Roll the frozen world model forward from every (strided) posterior step.

        start_z (B, T, Z), start_h (B, T, Hd), start_x per layer (B, T, N) complex,
        start_cont (B, T).
        """
        horizon = self.cfg.horizon if horizon is None else horizon
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        sel = slice(None, None, self.cfg.start_stride)
        zs = np.asarray(start_z)[:, sel]
        batch_shape = zs.shape[:2]
        m = zs.shape[0] * zs.shape[1]
        z = zs.reshape(m, -1).astype(self.dtype)
        h = np.asarray(start_h)[:, sel].reshape(m, -1).astype(self.dtype)
        x = LayerState([ComplexPair.from_numpy(np.asarray(xl)[:, sel].reshape(m, -1), dtype=self.dtype)
                        for xl in start_x])
        mode = self.cfg.policy_input
        feats, zs_out, hs_out, actions = [], [z], [h], []
        with no_grad():
            discs = wm.seq.discretize()
            for _ in range(horizon):
                f = wm.state_features(z, h, x, mode)
                feats.append(f.data)
                a = self.select(f, rng)
                actions.append(a)
                onehot = Tensor(np.eye(self.num_actions, dtype=self.dtype)[a])
                z_t, h_t, x = wm.img_step(Tensor(z), x, onehot, rng, discs)
                z, h = z_t.data, h_t.data
                zs_out.append(z)
                hs_out.append(h)
            feats.append(wm.state_features(z, h, x, mode).data)
            zz = np.stack(zs_out[1:])
            hh = np.stack(hs_out[1:])
            head_in = concat([Tensor(zz), Tensor(hh)], axis=-1)
            rewards = wm.twohot.decode(wm.reward_head(head_in))
            cont_logit = wm.cont_head(head_in).data[..., 0]
        conts = 1.0 / (1.0 + np.exp(-cont_logit.astype(np.float64)))
        return ImaginedTrajectory(
            np.stack(feats), np.stack(zs_out), np.stack(hs_out), np.stack(actions),
            rewards, conts, np.asarray(start_cont, dtype=np.float64)[:, sel].reshape(m), batch_shape,
        )

    # ------------------------------------------------------------ losses

    def weights(self, traj: ImaginedTrajectory) -> np.ndarray:
        """Cumulative continue probability of reaching each of states 0..H-1."""
        c = np.concatenate([traj.start_cont[None], traj.conts[:-1]], axis=0)
        return np.cumprod(c, axis=0)

    def actor_loss(self, feats: np.ndarray, actions: np.ndarray, advantages: np.ndarray,
                   weights: np.ndarray) -> tuple[Tensor, dict]:
        """-E_w[adv * ln pi(a)] - entropy_coef * E_w[H(pi)]; adv is treated as a constant."""
        probs = self.policy_probs(Tensor(np.asarray(feats, self.dtype)))
        logp = log(probs)
        onehot = np.eye(self.num_actions, dtype=self.dtype)[np.asarray(actions)]
        logp_a = sum_(mul(logp, onehot), axis=-1)
        ent = -sum_(mul(probs, logp), axis=-1)
        w = (weights / max(weights.sum(), 1e-8)).astype(self.dtype)
        pg = -sum_(mul(logp_a, (advantages * w).astype(self.dtype)))
        ent_term = sum_(mul(ent, w))
        loss = pg - ent_term * self.cfg.entropy_coef
        return loss, {"loss/actor": float(loss.data), "actor_entropy": float(ent_term.data)}

    def critic_loss(self, feats: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> tuple[Tensor, dict]:
        f = np.asarray(feats, self.dtype)
        logp = log_softmax(self.critic(Tensor(f)), -1)
        target = self.twohot.encode(targets).astype(self.dtype)
        with no_grad():
            ema = softmax(self.critic_ema(Tensor(f)), -1).data
        ce = -sum_(mul(logp, target), axis=-1)
        reg = -sum_(mul(logp, ema), axis=-1)
        per = ce + reg * self.cfg.critic_ema_reg
        w = (weights / max(weights.sum(), 1e-8)).astype(self.dtype)
        loss = sum_(mul(per, w))
        return loss, {"loss/critic": float(loss.data)}

    def train_step(self, traj: ImaginedTrajectory) -> dict:
        cfg = self.cfg
        values = self.values(traj.feats)
        returns = lambda_returns(traj.rewards, traj.conts, values, cfg.gamma, cfg.lam)
        weights = self.weights(traj)
        divisor = self.return_norm.update(returns[:-1])
        adv = (returns[:-1] - values[:-1]) / divisor

        a_loss, metrics = self.actor_loss(traj.feats[:-1], traj.actions, adv, weights)
        a_grads = backward(a_loss, self.actor_opt.params)
        c_loss, c_metrics = self.critic_loss(traj.feats[:-1], returns[:-1], weights)
        c_grads = backward(c_loss, self.critic_opt.params)
        metrics.update(c_metrics)
        if np.isfinite(a_loss.data) and np.isfinite(c_loss.data):
            metrics["grad_norm/actor"] = self.actor_opt.step(a_grads)["grad_norm"]
            metrics["grad_norm/critic"] = self.critic_opt.step(c_grads)["grad_norm"]
            self._sync_ema(1.0 - cfg.critic_ema_decay)
            metrics["ac_skipped"] = 0.0
        else:
            metrics["ac_skipped"] = 1.0
        metrics.update({
            "return_scale": divisor,
            "imag_return": float(returns[0].mean()),
            "imag_reward": float(traj.rewards.mean()),
            "value_mean": float(values.mean()),
        })
        return metrics

    def extra_state(self) -> dict[str, np.ndarray]:
        out = {f"critic_ema/{k}": v.data.copy() for k, v in self.critic_ema_tensors().items()}
        out["return_norm/ema_scale"] = np.array(self.return_norm.ema_scale)
        return out

    def load_extra_state(self, state) -> None:
        for k, v in self.critic_ema_tensors().items():
            v.data = np.array(state[f"critic_ema/{k}"], dtype=self.dtype)
        self.return_norm.ema_scale = float(state["return_norm/ema_scale"])


class Agent:
    """World model plus actor-critic, with a batched acting interface."""

    def __init__(self, wm: WorldModel, ac: ActorCritic):
        self.wm, self.ac = wm, ac

    @property
    def mode(self) -> str:
        return self.ac.cfg.policy_input

    def initial_state(self, batch: int) -> LatentState:
        return self.wm.initial_state(batch)

    def act(self, obs, is_first, state: LatentState | None, rng: np.random.Generator | None,
            explore: bool = True) -> tuple[np.ndarray, LatentState]:
        """Posterior update on ``obs`` then an action; eval (explore=False) is fully greedy."""
        obs = np.asarray(obs)
        if state is None:
            state = self.initial_state(obs.shape[0])
        step_rng = rng if explore else None
        st = self.wm.observe_step(state, obs, is_first, step_rng)
        with no_grad():
            feats = self.wm.state_features(st.z, st.h, st.x, self.mode)
            actions = self.ac.select(feats, step_rng)
        st.action = np.eye(self.ac.num_actions, dtype=self.wm.dtype)[actions]
        return actions, st
