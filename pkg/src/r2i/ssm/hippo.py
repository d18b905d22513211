"""Diagonal SSM parameters initialised from the HiPPO-LegS normal part."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numkit import ComplexPair, Module, Tensor


@dataclass(frozen=True)
class SsmLayerConfig:
    state_size: int
    io_size: int
    hippo_blocks: int = 8
    delta_min: float = 1e-3
    delta_max: float = 1e-1

    def __post_init__(self):
        if self.state_size <= 0 or self.io_size <= 0 or self.hippo_blocks <= 0:
            raise ValueError("state_size, io_size and hippo_blocks must be positive")
        if self.state_size % self.hippo_blocks:
            raise ValueError(
                f"state_size {self.state_size} is not divisible by hippo_blocks {self.hippo_blocks}"
            )
        if not 0 < self.delta_min < self.delta_max:
            raise ValueError(f"need 0 < delta_min < delta_max, got {self.delta_min}, {self.delta_max}")


def hippo_normal(n: int) -> np.ndarray:
    """Normal part of the HiPPO-LegS matrix (LegS plus its rank-one correction)."""
    p = np.sqrt(np.arange(n) + 0.5)
    pp = np.outer(p, p)
    a = np.tril(-pp, -1) + np.triu(pp, 1)
    np.fill_diagonal(a, -0.5)
    return a


def hippo_spectrum(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and unitary eigenvectors of ``hippo_normal(n)``."""
    skew = hippo_normal(n) + 0.5 * np.eye(n)
    lam, vecs = np.linalg.eigh(-1j * skew)
    return -0.5 + 1j * lam, vecs


class ContinuousSsm(Module):
    """Continuous-time diagonal MIMO SSM: A (N,), B (N, H), C (H, N), D (H,), log step (N,)."""

    def __init__(self, a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray,
                 log_delta: np.ndarray, dtype=np.float32):
        def p(x):
            return Tensor(np.asarray(x, dtype=dtype), requires_grad=True)

        self.A_re, self.A_im = p(a.real), p(a.imag)
        self.B_re, self.B_im = p(b.real), p(b.imag)
        self.C_re, self.C_im = p(c.real), p(c.imag)
        self.D = p(d)
        self.log_delta = p(log_delta)

    @property
    def A(self) -> ComplexPair:
        return ComplexPair(self.A_re, self.A_im)

    @property
    def B(self) -> ComplexPair:
        return ComplexPair(self.B_re, self.B_im)

    @property
    def C(self) -> ComplexPair:
        return ComplexPair(self.C_re, self.C_im)

    @property
    def state_size(self) -> int:
        return self.A_re.shape[0]

    @property
    def io_size(self) -> int:
        return self.D.shape[0]


def init_hippo_diag(cfg: SsmLayerConfig, seed: int | np.random.Generator, dtype=np.float32) -> ContinuousSsm:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, h = cfg.state_size, cfg.io_size
    block = n // cfg.hippo_blocks
    lam, vecs = hippo_spectrum(block)
    a = np.tile(lam, cfg.hippo_blocks)

    # B and C live in the eigenbasis: B~ = V^H B, C~ = C V per block
    b_real = rng.normal(0.0, np.sqrt(1.0 / h), size=(n, h))
    c_real = rng.normal(0.0, np.sqrt(1.0 / n), size=(h, n))
    b = np.empty((n, h), dtype=np.complex128)
    c = np.empty((h, n), dtype=np.complex128)
    for j in range(cfg.hippo_blocks):
        sl = slice(j * block, (j + 1) * block)
        b[sl] = vecs.conj().T @ b_real[sl]
        c[:, sl] = c_real[:, sl] @ vecs
    d = rng.normal(size=h)
    lo, hi = np.log(cfg.delta_min), np.log(cfg.delta_max)
    log_delta = lo + rng.uniform(size=n) * (hi - lo)
    return ContinuousSsm(a, b, c, d, log_delta, dtype=dtype)
