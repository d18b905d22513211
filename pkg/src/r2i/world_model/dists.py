"""Distribution helpers: symlog, twohot bins, unimixed categoricals."""

from __future__ import annotations

import numpy as np

from ..numkit import (
    Tensor,
    add,
    concat,
    log,
    log_softmax,
    mul,
    softmax,
    stop_gradient,
    straight_through,
    sub,
    sum_,
)


def symlog(x):
    return np.sign(x) * np.log1p(np.abs(x))


def symexp(x):
    return np.sign(x) * np.expm1(np.abs(x))


class TwoHot:
    """Scalar targets as weights on two neighbouring bins, uniform in symlog space."""

    def __init__(self, bins: int = 255, low: float = -20.0, high: float = 20.0):
        if bins < 2:
            raise ValueError("need at least two bins")
        self.bins = np.linspace(low, high, bins)

    @property
    def size(self) -> int:
        return self.bins.size

    def encode(self, values) -> np.ndarray:
        """(...,) raw values -> (..., bins) weights."""
        y = np.clip(symlog(np.asarray(values, dtype=np.float64)), self.bins[0], self.bins[-1])
        hi = np.clip(np.searchsorted(self.bins, y, side="right"), 1, self.size - 1)
        lo = hi - 1
        w_hi = (y - self.bins[lo]) / (self.bins[hi] - self.bins[lo])
        out = np.zeros(y.shape + (self.size,))
        np.put_along_axis(out, lo[..., None], (1.0 - w_hi)[..., None], axis=-1)
        np.put_along_axis(out, hi[..., None], w_hi[..., None], axis=-1)
        return out

    def decode(self, logits) -> np.ndarray:
        """Mean in symlog space, mapped back with symexp."""
        data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
        p = np.exp(data - data.max(axis=-1, keepdims=True))
        p /= p.sum(axis=-1, keepdims=True)
        return symexp(p @ self.bins)

    def nll(self, logits: Tensor, values) -> Tensor:
        """Cross-entropy against the twohot target; shape logits.shape[:-1]."""
        target = self.encode(values).astype(logits.dtype)
        return -sum_(mul(log_softmax(logits, -1), target), axis=-1)


def unimix_probs(logits: Tensor, unimix: float) -> Tensor:
    classes = logits.shape[-1]
    p = softmax(logits, -1)
    if unimix == 0:
        return p
    return add(mul(p, 1.0 - unimix), unimix / classes)


def sample_onehot(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of the last axis, by inverse CDF."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1] + (1,)) * cdf[..., -1:]
    idx = np.minimum((u > cdf).sum(axis=-1), probs.shape[-1] - 1)
    out = np.zeros(probs.shape, dtype=probs.dtype)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def argmax_onehot(probs: np.ndarray) -> np.ndarray:
    out = np.zeros(probs.shape, dtype=probs.dtype)
    np.put_along_axis(out, probs.argmax(axis=-1)[..., None], 1.0, axis=-1)
    return out


def sample_st(probs: Tensor, rng: np.random.Generator | None) -> Tensor:
    """Straight-through one-hot sample; argmax when rng is None."""
    sample = argmax_onehot(probs.data) if rng is None else sample_onehot(probs.data, rng)
    return straight_through(probs, sample)


def categorical_kl(q: Tensor, p: Tensor) -> Tensor:
    """KL(q || p) over the last axis, for probability tensors."""
    return sum_(mul(q, sub(log(q), log(p))), axis=-1)


def kl_terms(post: Tensor, prior: Tensor) -> tuple[Tensor, Tensor]:
    """(dyn, rep) KLs summed over latent rows; dyn trains the prior, rep the posterior."""
    dyn = sum_(categorical_kl(stop_gradient(post), prior), axis=-1)
    rep = sum_(categorical_kl(post, stop_gradient(prior)), axis=-1)
    return dyn, rep


def bernoulli_nll(logit: Tensor, target) -> Tensor:
    """-log p(target) for a Bernoulli with the given logit, elementwise."""
    pair = concat([mul(logit, 0.0)[..., None], logit[..., None]], axis=-1)
    logp = log_softmax(pair, -1)
    t = np.asarray(target, dtype=logit.dtype)[..., None]
    return -sum_(mul(logp, np.concatenate([1.0 - t, t], axis=-1)), axis=-1)


def categorical_entropy(logits: Tensor) -> Tensor:
    logp = log_softmax(logits, -1)
    return -sum_(mul(softmax(logits, -1), logp), axis=-1)
