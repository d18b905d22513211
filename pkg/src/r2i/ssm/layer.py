"""S3M layers: diagonal MIMO SSM, GLU mixing and post-norm residual."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numkit import (
    ComplexPair,
    LayerNorm,
    Linear,
    Module,
    Tensor,
    add,
    concat,
    gelu,
    matmul,
    mul,
    sigmoid,
    sub,
    swapaxes,
)
from .discretize import DiscreteSsm, discretize_bilinear
from .hippo import SsmLayerConfig, init_hippo_diag
from .scan import linear_scan


@dataclass
class LayerState:
    """Per-layer complex hidden states, each (batch, N)."""

    xs: list[ComplexPair] = field(default_factory=list)

    @classmethod
    def zeros(cls, layers: int, batch: int, state_size: int, dtype=np.float32) -> "LayerState":
        z = np.zeros((batch, state_size), dtype)
        return cls([ComplexPair(Tensor(z), Tensor(z)) for _ in range(layers)])

    def features(self) -> Tensor:
        """Real feature vector (batch, 2 * layers * N): real and imaginary parts of every layer."""
        return concat([t for x in self.xs for t in (x.real, x.imag)], axis=-1)

    def detach(self) -> "LayerState":
        return LayerState([ComplexPair(x.real.detach(), x.imag.detach()) for x in self.xs])

    def numpy(self) -> np.ndarray:
        """(layers, batch, N) complex."""
        return np.stack([x.numpy() for x in self.xs])

    @classmethod
    def from_numpy(cls, arr: np.ndarray, dtype=np.float32) -> "LayerState":
        return cls([ComplexPair.from_numpy(x, dtype=dtype) for x in arr])

    def __getitem__(self, idx) -> "LayerState":
        return LayerState([x[idx] for x in self.xs])


def _transpose(p: ComplexPair) -> ComplexPair:
    return ComplexPair(swapaxes(p.real, 0, 1), swapaxes(p.imag, 0, 1))


def _input_drive(ssm: DiscreteSsm, u: Tensor) -> ComplexPair:
    # B_bar u for u (..., H) and B_bar (N, H)
    bt = _transpose(ssm.B_bar)
    return ComplexPair(matmul(u, bt.real), matmul(u, bt.imag))


def _readout(ssm: DiscreteSsm, x: ComplexPair, u: Tensor) -> Tensor:
    # 2 Re(C x) + D u
    ct = _transpose(ssm.C)
    re = sub(matmul(x.real, ct.real), matmul(x.imag, ct.imag))
    return add(mul(re, 2.0), mul(ssm.D, u))


def _as_flags(flags, dtype) -> np.ndarray:
    return np.asarray(flags, dtype=dtype)


def ssm_step(ssm: DiscreteSsm, x_prev: ComplexPair, u: Tensor, is_first,
             start: ComplexPair | None = None) -> tuple[Tensor, ComplexPair]:
    """One recurrent step. x_prev (M, N), u (M, H), is_first (M,)."""
    first = _as_flags(is_first, u.dtype)[..., None]
    x_in = x_prev * (1.0 - first)
    if start is not None:
        x_in = x_in + start * first
    x = ssm.A_bar * x_in + _input_drive(ssm, u)
    return _readout(ssm, x, u), x


def ssm_parallel(ssm: DiscreteSsm, u: Tensor, is_first, x0: ComplexPair | None = None,
                 start: ComplexPair | None = None) -> tuple[Tensor, ComplexPair]:
    """Whole-sequence pass. u (M, L, H), is_first (M, L); returns y (M, L, H), x (M, L, N)."""
    first = _as_flags(is_first, u.dtype)
    bu = _input_drive(ssm, u)
    if start is not None:
        bu = bu + (ssm.A_bar * start) * first[..., None]
    x = linear_scan(ssm.A_bar, bu, first, x0)
    return _readout(ssm, x, u), x


@dataclass(frozen=True)
class S3MConfig:
    layers: int = 3
    state_size: int = 512
    io_size: int = 512
    units: int = 1024
    hippo_blocks: int = 8
    delta_min: float = 1e-3
    delta_max: float = 1e-1
    learnable_start: bool = False

    def layer_config(self) -> SsmLayerConfig:
        return SsmLayerConfig(self.state_size, self.io_size, self.hippo_blocks, self.delta_min, self.delta_max)


class S3MLayer(Module):
    """SSM, then GLU(GeLU(v)) projected back to width H, then LayerNorm(u + w)."""

    def __init__(self, cfg: S3MConfig, rng: np.random.Generator, dtype=np.float32):
        self.ssm = init_hippo_diag(cfg.layer_config(), rng, dtype)
        self.glu_a = Linear(cfg.io_size, cfg.units, rng, dtype)
        self.glu_b = Linear(cfg.io_size, cfg.units, rng, dtype)
        self.proj = Linear(cfg.units, cfg.io_size, rng, dtype)
        self.norm = LayerNorm(cfg.io_size, dtype)
        if cfg.learnable_start:
            self.start_re = Tensor(np.zeros(cfg.state_size, dtype), requires_grad=True)
            self.start_im = Tensor(np.zeros(cfg.state_size, dtype), requires_grad=True)
        else:
            self.start_re = self.start_im = None

    @property
    def start(self) -> ComplexPair | None:
        if self.start_re is None:
            return None
        return ComplexPair(self.start_re, self.start_im)

    def discretize(self) -> DiscreteSsm:
        return discretize_bilinear(self.ssm)

    def mix(self, u: Tensor, v: Tensor) -> Tensor:
        g = gelu(v)
        w = self.proj(mul(self.glu_a(g), sigmoid(self.glu_b(g))))
        return self.norm(add(u, w))

    def parallel(self, u: Tensor, is_first, x0: ComplexPair | None = None,
                 disc: DiscreteSsm | None = None) -> tuple[Tensor, ComplexPair]:
        v, x = ssm_parallel(disc or self.discretize(), u, is_first, x0, self.start)
        return self.mix(u, v), x

    def step(self, u: Tensor, x_prev: ComplexPair, is_first,
             disc: DiscreteSsm | None = None) -> tuple[Tensor, ComplexPair]:
        v, x = ssm_step(disc or self.discretize(), x_prev, u, is_first, self.start)
        return self.mix(u, v), x


class S3M(Module):
    """Stack of S3M layers with a parallel (training) and a recurrent (rollout) mode."""

    def __init__(self, cfg: S3MConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.layers = [S3MLayer(cfg, rng, dtype) for _ in range(cfg.layers)]

    def initial_state(self, batch: int) -> LayerState:
        return LayerState.zeros(self.cfg.layers, batch, self.cfg.state_size, self.dtype)

    def discretize(self) -> list[DiscreteSsm]:
        return [layer.discretize() for layer in self.layers]

    def forward(self, u_seq: Tensor, state_in: LayerState | None, is_first,
                mode: str = "parallel") -> tuple[Tensor, list[ComplexPair]]:
        """u_seq (M, L, H) -> (h_seq (M, L, H), per-layer states (M, L, N))."""
        if u_seq.ndim != 3:
            raise ValueError(f"u_seq must be (batch, length, width), got {u_seq.shape}")
        if mode == "recurrent":
            if u_seq.shape[1] != 1:
                raise ValueError(f"recurrent mode takes length-1 input, got length {u_seq.shape[1]}")
            first = np.asarray(is_first).reshape(u_seq.shape[0])
            h, state = self.step(u_seq[:, 0], state_in, first)
            return h.reshape(h.shape[0], 1, h.shape[1]), [
                ComplexPair(x.real.reshape(x.shape[0], 1, -1), x.imag.reshape(x.shape[0], 1, -1))
                for x in state.xs
            ]
        if mode != "parallel":
            raise ValueError(f"unknown mode {mode!r}")
        h, states = u_seq, []
        for i, layer in enumerate(self.layers):
            x0 = None if state_in is None else state_in.xs[i]
            h, x = layer.parallel(h, is_first, x0)
            states.append(x)
        return h, states

    def step(self, u: Tensor, state: LayerState | None, is_first,
             discs: list[DiscreteSsm] | None = None) -> tuple[Tensor, LayerState]:
        """u (M, H), is_first (M,) -> (h (M, H), new state)."""
        if state is None:
            state = self.initial_state(u.shape[0])
        discs = discs or self.discretize()
        h, xs = u, []
        for layer, x_prev, disc in zip(self.layers, state.xs, discs):
            h, x = layer.step(h, x_prev, is_first, disc)
            xs.append(x)
        return h, LayerState(xs)


s3m_block_forward = S3M.forward
