"""Complex values as pairs of real tensors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, add, as_tensor, matmul, mul, neg, sub


@dataclass
class ComplexPair:
    real: Tensor
    imag: Tensor

    def __post_init__(self):
        self.real = as_tensor(self.real)
        self.imag = as_tensor(self.imag)
        if self.real.shape != self.imag.shape:
            raise ShapeError(f"ComplexPair: real {self.real.shape} vs imag {self.imag.shape}")

    @classmethod
    def from_numpy(cls, z: np.ndarray, requires_grad: bool = False, dtype=None) -> "ComplexPair":
        z = np.asarray(z)
        dtype = dtype or (np.float32 if z.dtype == np.complex64 else np.float64)
        return cls(
            Tensor(z.real.astype(dtype), requires_grad=requires_grad),
            Tensor(z.imag.astype(dtype), requires_grad=requires_grad),
        )

    def numpy(self) -> np.ndarray:
        return self.real.data + 1j * self.imag.data

    @property
    def shape(self) -> tuple[int, ...]:
        return self.real.shape

    @property
    def dtype(self):
        return self.real.dtype

    def conj(self) -> "ComplexPair":
        return ComplexPair(self.real, neg(self.imag))

    def __add__(self, other: "ComplexPair") -> "ComplexPair":
        return ComplexPair(add(self.real, other.real), add(self.imag, other.imag))

    def __mul__(self, other) -> "ComplexPair":
        if isinstance(other, ComplexPair):
            return complex_mul(self, other)
        return ComplexPair(mul(self.real, other), mul(self.imag, other))

    __rmul__ = __mul__

    def __getitem__(self, idx) -> "ComplexPair":
        return ComplexPair(self.real[idx], self.imag[idx])


def complex_mul(p: ComplexPair, q: ComplexPair) -> ComplexPair:
    """(a+bi)(c+di) = (ac-bd) + (ad+bc)i, broadcasting."""
    return ComplexPair(
        sub(mul(p.real, q.real), mul(p.imag, q.imag)),
        add(mul(p.real, q.imag), mul(p.imag, q.real)),
    )


def take_real(p: ComplexPair) -> Tensor:
    return p.real


def real_matmul(x: Tensor, w: ComplexPair) -> ComplexPair:
    """Real input times complex matrix."""
    return ComplexPair(matmul(x, w.real), matmul(x, w.imag))


def complex_matmul(x: ComplexPair, w: ComplexPair) -> ComplexPair:
    return ComplexPair(
        sub(matmul(x.real, w.real), matmul(x.imag, w.imag)),
        add(matmul(x.real, w.imag), matmul(x.imag, w.real)),
    )
