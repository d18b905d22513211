"""Parameter containers and the small set of layers the models need."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor, add, layernorm, matmul, mul, silu


class Module:
    """Registers Tensor attributes as parameters and Module attributes as children."""

    def __setattr__(self, name, value):
        if isinstance(value, (Tensor, Module)) or (
            isinstance(value, list) and value and all(isinstance(v, Module) for v in value)
        ):
            order = self.__dict__.setdefault("_order", [])
            if name not in order:
                order.append(name)
        object.__setattr__(self, name, value)

    def named_params(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name in self.__dict__.get("_order", []):
            value = getattr(self, name)
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_params(f"{prefix}{name}.")
            else:
                for i, child in enumerate(value):
                    yield from child.named_params(f"{prefix}{name}.{i}.")

    def params(self) -> dict[str, Tensor]:
        return dict(self.named_params())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_params()}

    def load_state_dict(self, state) -> None:
        own = self.params()
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)[:5]}")
        for k, p in own.items():
            value = np.asarray(state[k])
            if value.shape != p.shape:
                raise ValueError(f"{k}: shape {value.shape} does not match {p.shape}")
            p.data = value.astype(p.dtype).copy()


def _param(arr: np.ndarray, dtype) -> Tensor:
    return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)


class Linear(Module):
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float32,
                 bias: bool = True, zero: bool = False):
        if zero:
            w = np.zeros((fan_in, fan_out))
        else:
            w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        self.w = _param(w, dtype)
        self.b = _param(np.zeros(fan_out), dtype) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.w)
        return y if self.b is None else add(y, self.b)


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float32, eps: float = 1e-3):
        self.scale = _param(np.ones(dim), dtype)
        self.bias = _param(np.zeros(dim), dtype)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return add(mul(layernorm(x, self.eps), self.scale), self.bias)


class MLP(Module):
    """[Linear -> LayerNorm -> SiLU] x layers, then a linear readout."""

    def __init__(self, fan_in: int, fan_out: int, units: int, layers: int,
                 rng: np.random.Generator, dtype=np.float32, zero_out: bool = False):
        dims = [fan_in] + [units] * layers
        self.hidden = [Linear(a, b, rng, dtype, bias=False) for a, b in zip(dims[:-1], dims[1:])]
        self.norms = [LayerNorm(units, dtype) for _ in range(layers)]
        self.out = Linear(dims[-1], fan_out, rng, dtype, zero=zero_out)

    def __call__(self, x: Tensor) -> Tensor:
        for lin, norm in zip(self.hidden, self.norms):
            x = silu(norm(lin(x)))
        return self.out(x)
