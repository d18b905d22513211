"""World model: non-recurrent encoder, S3M sequence model, prior and prediction heads."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..envs.base import ObsLayout
from ..numkit import (
    MLP,
    Adam,
    Linear,
    Module,
    Tensor,
    add,
    backward,
    concat,
    log_softmax,
    maximum,
    mean,
    mul,
    no_grad,
    sub,
    sum_,
)
from ..ssm import S3M, LayerState, S3MConfig
from .dists import (
    TwoHot,
    bernoulli_nll,
    kl_terms,
    sample_st,
    symlog,
    unimix_probs,
)


class NonFiniteError(FloatingPointError):
    pass


@dataclass(frozen=True)
class WmConfig:
    s3m: S3MConfig = field(default_factory=S3MConfig)
    stoch: int = 32
    classes: int = 32
    mlp_units: int = 512
    mlp_layers: int = 2
    reward_bins: int = 255
    bin_range: float = 20.0
    beta_pred: float = 1.0
    beta_dyn: float = 0.5
    beta_rep: float = 0.1
    free_nats: float = 1.0
    unimix: float = 0.01
    learning_rate: float = 1e-4
    grad_clip: float = 1000.0
    adam_eps: float = 1e-8

    def __post_init__(self):
        if min(self.beta_pred, self.beta_dyn, self.beta_rep) < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0 <= self.unimix < 1:
            raise ValueError(f"unimix must be in [0, 1), got {self.unimix}")

    @property
    def latent_size(self) -> int:
        return self.stoch * self.classes


@dataclass
class LatentState:
    """Model state at one step for a batch of streams: z (M, S*C), h (M, H), x per layer."""

    z: np.ndarray
    h: np.ndarray
    x: LayerState
    action: np.ndarray  # one-hot of the action last taken, (M, A)


@dataclass
class HeadOutputs:
    obs: list[Tensor]  # per class-count group, (..., dims, classes) logits; continuous means last
    reward: Tensor
    cont: Tensor
    prior: Tensor


class WorldModel(Module):
    def __init__(self, cfg: WmConfig, obs_layout: ObsLayout, num_actions: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.layout = obs_layout
        self.num_actions = num_actions
        self.dtype = dtype
        self.twohot = TwoHot(cfg.reward_bins, -cfg.bin_range, cfg.bin_range)
        h = cfg.s3m.io_size
        feat = cfg.latent_size + h
        units, layers = cfg.mlp_units, cfg.mlp_layers
        self.encoder = MLP(obs_layout.encoded_size, cfg.latent_size, units, layers, rng, dtype)
        self.embed = Linear(num_actions + cfg.latent_size, h, rng, dtype)
        self.seq = S3M(cfg.s3m, rng, dtype)
        self.prior_head = MLP(h, cfg.latent_size, units, layers, rng, dtype)
        self.groups = obs_layout.groups()
        dec_out = sum(c * len(idx) for c, idx in self.groups) + obs_layout.continuous
        self.decoder = MLP(feat, dec_out, units, layers, rng, dtype)
        self.reward_head = MLP(feat, cfg.reward_bins, units, layers, rng, dtype, zero_out=True)
        self.cont_head = MLP(feat, 1, units, layers, rng, dtype)
        self.optimizer = Adam(self.params(), cfg.learning_rate, cfg.adam_eps, clip=cfg.grad_clip)

    # ------------------------------------------------------------ pieces

    def _rows(self, logits: Tensor) -> Tensor:
        return logits.reshape(*logits.shape[:-1], self.cfg.stoch, self.cfg.classes)

    def encode(self, obs, rng: np.random.Generator | None) -> tuple[Tensor, Tensor, Tensor]:
        """Raw observations (..., raw) -> (logits, one-hot sample, probs), each (..., S, C).

        With ``rng=None`` the sample is the per-row argmax.
        """
        obs = np.asarray(obs)
        if obs.shape[-1] != self.layout.raw_size:
            raise ValueError(f"observation width {obs.shape[-1]} != layout {self.layout.raw_size}")
        logits = self._rows(self.encoder(Tensor(self.layout.one_hot(obs).astype(self.dtype))))
        if not np.all(np.isfinite(logits.data)):
            raise NonFiniteError("encoder produced non-finite logits")
        probs = unimix_probs(logits, self.cfg.unimix)
        return logits, sample_st(probs, rng), probs

    def prior(self, h: Tensor) -> tuple[Tensor, Tensor]:
        logits = self._rows(self.prior_head(h))
        return logits, unimix_probs(logits, self.cfg.unimix)

    def actions_onehot(self, actions) -> np.ndarray:
        return np.eye(self.num_actions, dtype=self.dtype)[np.asarray(actions, dtype=np.int64)]

    def seq_inputs(self, actions_onehot: np.ndarray, z_flat: Tensor, is_first) -> Tensor:
        """Embedding of (a_{t-1}, z_{t-1}), zero at t=0 and wherever is_first is set."""
        b, t = z_flat.shape[:2]
        keep = (1.0 - np.asarray(is_first, dtype=self.dtype))[..., None]
        keep[:, 0] = 0.0
        a_prev = np.zeros_like(actions_onehot)
        a_prev[:, 1:] = actions_onehot[:, :-1]
        zero = Tensor(np.zeros((b, 1, z_flat.shape[-1]), self.dtype))
        z_prev = concat([zero, z_flat[:, :-1]], axis=1)
        inp = concat([Tensor(a_prev * keep), mul(z_prev, keep)], axis=-1)
        return self.embed(inp)

    def sequence_forward(self, actions_onehot: np.ndarray, z_flat: Tensor, is_first,
                         x0: LayerState | None = None) -> tuple[Tensor, list]:
        if actions_onehot.shape[:2] != z_flat.shape[:2] or np.shape(is_first) != z_flat.shape[:2]:
            raise ValueError(
                f"length mismatch: actions {actions_onehot.shape[:2]}, z {z_flat.shape[:2]}, "
                f"is_first {np.shape(is_first)}"
            )
        first = np.array(is_first, dtype=self.dtype)
        if x0 is None:
            first[:, 0] = 1.0
        u = self.seq_inputs(actions_onehot, z_flat, first)
        return self.seq.forward(u, x0, first, mode="parallel")

    def heads_forward(self, z_flat: Tensor, h: Tensor) -> HeadOutputs:
        feat = concat([z_flat, h], axis=-1)
        dec = self.decoder(feat)
        lead = dec.shape[:-1]
        obs, start = [], 0
        for c, idx in self.groups:
            width = c * len(idx)
            obs.append(dec[..., start:start + width].reshape(*lead, len(idx), c))
            start += width
        if self.layout.continuous:
            obs.append(dec[..., start:])
        prior_logits, _ = self.prior(h)
        cont = self.cont_head(feat)
        return HeadOutputs(obs, self.reward_head(feat), cont.reshape(*cont.shape[:-1]), prior_logits)

    def obs_nll(self, heads: HeadOutputs, obs) -> Tensor:
        obs = np.asarray(obs)
        total = None
        n_cat = len(self.layout.categorical)
        for (c, idx), logits in zip(self.groups, heads.obs):
            target = np.eye(c, dtype=self.dtype)[obs[..., idx].astype(np.int64)]
            term = -sum_(mul(log_softmax(logits, -1), target), axis=(-2, -1))
            total = term if total is None else add(total, term)
        if self.layout.continuous:
            target = symlog(obs[..., n_cat:]).astype(self.dtype)
            diff = sub(heads.obs[-1], target)
            term = sum_(mul(diff, diff), axis=-1)
            total = term if total is None else add(total, term)
        return total

    # ------------------------------------------------------------ objective

    def kl_loss(self, dyn: Tensor, rep: Tensor) -> Tensor:
        """Free-bits clamped, weighted dynamics plus representation terms."""
        cfg = self.cfg
        return add(mul(maximum(dyn, cfg.free_nats), cfg.beta_dyn), mul(maximum(rep, cfg.free_nats), cfg.beta_rep))

    def loss(self, batch, rng: np.random.Generator | None, fixed_z: np.ndarray | None = None):
        """Mean over batch and time of the prediction, dynamics and representation terms.

        ``fixed_z`` replaces the straight-through sample by a constant one-hot
        (used by gradient checks, where the biased estimator would not match).
        """
        cfg = self.cfg
        logits, z, post = self.encode(batch.obs, rng)
        if fixed_z is not None:
            z = Tensor(np.asarray(fixed_z, dtype=self.dtype))
        b, t = z.shape[:2]
        z_flat = z.reshape(b, t, cfg.latent_size)
        acts = self.actions_onehot(batch.action)
        h, xs = self.sequence_forward(acts, z_flat, batch.is_first)
        heads = self.heads_forward(z_flat, h)
        prior = self.prior(h)[1]

        obs_nll = self.obs_nll(heads, batch.obs)
        rew_nll = self.twohot.nll(heads.reward, batch.reward)
        cont_nll = bernoulli_nll(heads.cont, batch.cont)
        dyn, rep = kl_terms(post, prior)
        pred = add(add(obs_nll, rew_nll), cont_nll)
        total = add(mul(pred, cfg.beta_pred), self.kl_loss(dyn, rep))
        loss = mean(total)
        metrics = {
            "loss/world": float(loss.data),
            "loss/obs": float(obs_nll.data.mean()),
            "loss/reward": float(rew_nll.data.mean()),
            "loss/cont": float(cont_nll.data.mean()),
            "kl_dyn": float(dyn.data.mean()),
            "kl_rep": float(rep.data.mean()),
        }
        aux = {
            "z": z_flat.data.copy(),
            "h": h.data.copy(),
            "x": [x.numpy() for x in xs],
        }
        return loss, metrics, aux

    def train_step(self, batch, rng: np.random.Generator) -> tuple[dict, dict]:
        loss, metrics, aux = self.loss(batch, rng)
        params = self.optimizer.params
        if not np.isfinite(loss.data):
            return {**metrics, "wm_skipped": 1.0}, aux
        grads = backward(loss, params)
        if not all(np.all(np.isfinite(g)) for g in grads.values()):
            return {**metrics, "wm_skipped": 1.0}, aux
        stats = self.optimizer.step(grads)
        metrics.update({"grad_norm/world": stats["grad_norm"], "wm_skipped": 0.0})
        return metrics, aux

    # ------------------------------------------------------------ stepping

    def initial_state(self, batch: int) -> LatentState:
        return LatentState(
            np.zeros((batch, self.cfg.latent_size), self.dtype),
            np.zeros((batch, self.cfg.s3m.io_size), self.dtype),
            self.seq.initial_state(batch),
            np.zeros((batch, self.num_actions), self.dtype),
        )

    def observe_step(self, state: LatentState, obs, is_first, rng: np.random.Generator | None,
                     discs=None) -> LatentState:
        """Consume one observation: (h, x) from (a_prev, z_prev), then z from the encoder."""
        with no_grad():
            keep = (1.0 - np.asarray(is_first, dtype=self.dtype))[:, None]
            inp = np.concatenate([state.action * keep, state.z * keep], axis=-1)
            h, x = self.seq.step(self.embed(Tensor(inp)), state.x, is_first, discs)
            _, z, _ = self.encode(np.asarray(obs)[:, None], rng)
        z = z.data.reshape(z.shape[0], -1)
        return LatentState(z, h.data, x, state.action)

    def img_step(self, z: Tensor, x: LayerState, action_onehot: Tensor,
                 rng: np.random.Generator | None, discs=None) -> tuple[Tensor, Tensor, LayerState]:
        """One imagined step from (z, x) under an action; returns (z_next, h_next, x_next)."""
        u = self.embed(concat([action_onehot, z], axis=-1))
        zeros = np.zeros(z.shape[0], self.dtype)
        h, x_next = self.seq.step(u, x, zeros, discs)
        _, probs = self.prior(h)
        z_next = sample_st(probs, rng)
        return z_next.reshape(z.shape[0], self.cfg.latent_size), h, x_next

    def state_features(self, z, h, x: LayerState, mode: str) -> Tensor:
        z = z if isinstance(z, Tensor) else Tensor(z)
        h = h if isinstance(h, Tensor) else Tensor(h)
        if mode == "output_state":
            return concat([z, h], axis=-1)
        if mode == "hidden_state":
            return concat([z, x.features()], axis=-1)
        if mode == "full_state":
            return concat([z, h, x.features()], axis=-1)
        raise ValueError(f"unknown policy input mode {mode!r}")

    def feature_size(self, mode: str) -> int:
        s = self.cfg.s3m
        x_size = 2 * s.layers * s.state_size
        return self.cfg.latent_size + {
            "output_state": s.io_size,
            "hidden_state": x_size,
            "full_state": s.io_size + x_size,
        }[mode]
