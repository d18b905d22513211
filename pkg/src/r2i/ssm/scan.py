"""Reset-aware associative scan over diagonal linear recurrences.

Element n is a triple ``(a_n, b_n, d_n)`` and the combine rule is

    (a_i, b_i, d_i) . (a_j, b_j, d_j) = ((1-d_i) a_j a_i, (1-d_i) a_j b_i + b_j, d_j)

so a done flag on the left discards the left prefix before the right element
is applied. The b-part of ``e_0 . e_1 . ... . e_n`` is the state after step n.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..numkit import ComplexPair
from ..numkit.tensor import _make, getitem
from . import _scan_py

try:
    if os.environ.get("R2I_PURE_PYTHON"):
        raise ImportError("pure-python scan requested")
    from ._scan_ext import blelloch_inplace as _compiled_kernel
except ImportError:
    _compiled_kernel = None

BACKEND = "compiled" if _compiled_kernel is not None else "python"


@dataclass
class ScanElement:
    a: np.ndarray
    b: np.ndarray
    done: float = 0.0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.result_type(self.a, np.complex64))
        self.b = np.asarray(self.b, dtype=np.result_type(self.b, np.complex64))
        if self.a.shape != self.b.shape:
            raise ValueError(f"ScanElement: a {self.a.shape} vs b {self.b.shape}")
        if self.done not in (0.0, 1.0):
            raise ValueError(f"done flag must be 0 or 1, got {self.done}")
        self.done = float(self.done)

    @classmethod
    def identity(cls, n: int) -> "ScanElement":
        return cls(np.ones(n, np.complex128), np.zeros(n, np.complex128), 0.0)


def combine(ei: ScanElement, ej: ScanElement) -> ScanElement:
    if ei.a.shape != ej.a.shape:
        raise ValueError(f"combine: state sizes {ei.a.shape} and {ej.a.shape} differ")
    keep = 1.0 - ei.done
    ka = keep * ej.a
    return ScanElement(ka * ei.a, ka * ei.b + ej.b, ej.done)


def _kernel(backend: str | None):
    backend = backend or BACKEND
    if backend == "compiled":
        if _compiled_kernel is None:
            raise RuntimeError("compiled scan kernel is not available")
        return _compiled_kernel
    if backend == "python":
        return _scan_py.blelloch_inplace
    raise ValueError(f"unknown scan backend {backend!r}")


def reset_scan(a, bu, is_first, x0=None, backend: str | None = None) -> np.ndarray:
    """States of ``x_n = (1 - is_first_n) a x_{n-1} + bu_n`` with ``x_{-1} = x0``.

    bu: (M, L, N) complex; a broadcastable to bu; is_first: (M, L); x0: (M, N).
    Returns (M, L, N) in the precision of bu.
    """
    bu = np.asarray(bu)
    if bu.ndim != 3:
        raise ValueError(f"bu must be (batch, length, state), got {bu.shape}")
    m, length, n = bu.shape
    if length < 1:
        raise ValueError("cannot scan an empty sequence")
    cdt = np.complex64 if bu.dtype in (np.float32, np.complex64) else np.complex128
    rdt = np.float32 if cdt == np.complex64 else np.float64
    is_first = np.broadcast_to(np.asarray(is_first, dtype=rdt), (m, length))
    p = 1 << int(np.ceil(np.log2(length + 1)))

    a_t = np.ones((p, m, n), cdt)
    b_t = np.zeros((p, m, n), cdt)
    d_t = np.zeros((p, m), rdt)
    a_t[1:length + 1] = np.broadcast_to(np.asarray(a), bu.shape).transpose(1, 0, 2)
    b_t[1:length + 1] = bu.transpose(1, 0, 2)
    if x0 is not None:
        b_t[0] = x0
    # element n-1 carries the reset that applies before step n
    d_t[:length] = is_first.T
    _kernel(backend)(a_t, b_t, d_t)
    return np.ascontiguousarray(b_t[1:length + 1].transpose(1, 0, 2))


def parallel_scan(a, bu, dones, x0=None, backend: str | None = None) -> np.ndarray:
    """States x_1..x_L where ``dones[n]`` resets the state entering step n+1.

    Accepts a single sequence (bu of shape (L, N)) or a batch (M, L, N).
    """
    bu = np.asarray(bu)
    single = bu.ndim == 2
    if single:
        bu = bu[None]
    if bu.shape[1] == 0:
        raise ValueError("cannot scan an empty sequence")
    dones = np.asarray(dones, dtype=np.float64).reshape(bu.shape[0], bu.shape[1])
    is_first = np.zeros_like(dones)
    is_first[:, 1:] = dones[:, :-1]
    if x0 is not None:
        x0 = np.broadcast_to(np.asarray(x0), (bu.shape[0], bu.shape[2]))
    out = reset_scan(a, bu, is_first, x0, backend)
    return out[0] if single else out


def linear_scan(a: ComplexPair, bu: ComplexPair, is_first, x0: ComplexPair | None = None) -> ComplexPair:
    """Differentiable reset-aware scan; a: (N,), bu: (M, L, N), x0: (M, N)."""
    an = a.numpy()
    bun = bu.numpy()
    x0n = None if x0 is None else x0.numpy()
    rdt = bu.dtype
    is_first = np.asarray(is_first, dtype=rdt)
    x = reset_scan(an, bun, is_first, x0n)
    parents = [a.real, a.imag, bu.real, bu.imag]
    if x0 is not None:
        parents += [x0.real, x0.imag]

    def bw(g):
        gc = g[0] + 1j * g[1]
        keep = 1.0 - is_first
        first_rev = np.ones_like(is_first)
        first_rev[:, 1:] = is_first[:, :0:-1]
        gx = reset_scan(np.conj(an), gc[:, ::-1], first_rev)[:, ::-1]
        x_prev = np.concatenate(
            [np.zeros_like(x[:, :1]) if x0n is None else x0n[:, None], x[:, :-1]], axis=1
        )
        ga = (np.conj(keep[..., None] * x_prev) * gx).sum(axis=(0, 1))
        grads = [ga.real.astype(rdt), ga.imag.astype(rdt), gx.real.astype(rdt), gx.imag.astype(rdt)]
        if x0 is not None:
            gx0 = np.conj(an) * keep[:, :1] * gx[:, 0]
            grads += [gx0.real.astype(rdt), gx0.imag.astype(rdt)]
        return tuple(grads)

    out = _make(np.stack([x.real, x.imag]).astype(rdt), parents, bw, "linear-scan")
    return ComplexPair(getitem(out, 0), getitem(out, 1))
