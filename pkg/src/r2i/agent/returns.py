"""Lambda-returns and percentile return normalisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def lambda_returns(rewards, conts, values, gamma: float = 0.997, lam: float = 0.95) -> np.ndarray:
    """Backward recursion ``R_i = r_i + gamma c_i ((1-lam) v_{i+1} + lam R_{i+1})``, ``R_H = v_H``.

    rewards, conts: (H, ...) for the transitions out of states 0..H-1 (reward and
    continue probability predicted at the state reached); values: (H+1, ...) for
    states 0..H. Returns (H+1, ...) whose last entry is the bootstrap v_H.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    conts = np.asarray(conts, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    horizon = rewards.shape[0]
    if conts.shape != rewards.shape or values.shape != (horizon + 1,) + rewards.shape[1:]:
        raise ValueError(f"shapes: rewards {rewards.shape}, conts {conts.shape}, values {values.shape}")
    if np.any((conts < 0) | (conts > 1)):
        raise ValueError("continue probabilities must lie in [0, 1]")
    out = np.empty_like(values)
    out[horizon] = values[horizon]
    disc = gamma * conts
    for i in reversed(range(horizon)):
        out[i] = rewards[i] + disc[i] * ((1.0 - lam) * values[i + 1] + lam * out[i + 1])
    return out


@dataclass
class ReturnNorm:
    """EMA of the 5th-95th percentile range; advantages are divided by max(1, scale)."""

    decay: float = 0.99
    ema_scale: float = 0.0
    low: float = 5.0
    high: float = 95.0

    def update(self, returns) -> float:
        r = np.asarray(returns, dtype=np.float64).reshape(-1)
        if r.size == 0:
            raise ValueError("cannot normalise an empty return batch")
        raw = float(np.percentile(r, self.high) - np.percentile(r, self.low))
        self.ema_scale = self.decay * self.ema_scale + (1.0 - self.decay) * raw
        return self.divisor

    @property
    def divisor(self) -> float:
        return max(1.0, self.ema_scale)


def normalize_returns(returns, state: ReturnNorm) -> tuple[float, ReturnNorm]:
    divisor = state.update(returns)
    return divisor, state
