"""Adam with global-norm clipping over named parameters."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .tensor import Tensor


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_by_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> tuple[dict, float]:
    norm = global_norm(grads)
    scale = min(1.0, max_norm / (norm + 1e-6)) if np.isfinite(norm) else 1.0
    if scale < 1.0:
        grads = {k: (g * scale).astype(g.dtype) for k, g in grads.items()}
    return dict(grads), norm


class Adam:
    def __init__(self, params: Mapping[str, Tensor], lr: float, eps: float = 1e-8,
                 beta1: float = 0.9, beta2: float = 0.999, clip: float | None = None):
        self.params = dict(params)
        self.lr, self.eps, self.beta1, self.beta2, self.clip = lr, eps, beta1, beta2, clip
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.t = 0

    def step(self, grads: Mapping[str, np.ndarray]) -> dict:
        """Apply one update; returns the pre-clip and post-clip gradient norms."""
        if self.clip is not None:
            grads, norm = clip_by_global_norm(grads, self.clip)
        else:
            norm = global_norm(grads)
        clipped = global_norm(grads)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)
        return {"grad_norm": norm, "grad_norm_clipped": clipped}

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"t": np.array(self.t)}
        out.update({f"m/{k}": v.copy() for k, v in self.m.items()})
        out.update({f"v/{k}": v.copy() for k, v in self.v.items()})
        return out

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        self.t = int(state["t"])
        for k in self.params:
            self.m[k] = np.array(state[f"m/{k}"])
            self.v[k] = np.array(state[f"v/{k}"])
