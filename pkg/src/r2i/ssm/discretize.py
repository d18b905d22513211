"""Bilinear (Tustin) discretisation of a diagonal SSM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numkit import ComplexPair, Tensor, add, div, exp, mul, sub
from .hippo import ContinuousSsm


class SingularStepError(ValueError):
    pass


@dataclass
class DiscreteSsm:
    A_bar: ComplexPair  # (N,)
    B_bar: ComplexPair  # (N, H)
    C: ComplexPair  # (H, N)
    D: Tensor  # (H,)


def bilinear(a: np.ndarray, b: np.ndarray, delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Plain numpy version: a (N,), b (N, H), delta (N,)."""
    a = np.asarray(a, dtype=np.complex128)
    delta = np.asarray(delta, dtype=np.float64)
    den = 1.0 - 0.5 * delta * a
    bad = np.flatnonzero(den == 0)
    if bad.size:
        raise SingularStepError(f"delta*a == 2 at entries {bad.tolist()}")
    a_bar = (1.0 + 0.5 * delta * a) / den
    b_bar = (delta / den)[:, None] * np.asarray(b)
    return a_bar, b_bar


def discretize_bilinear(ssm: ContinuousSsm) -> DiscreteSsm:
    delta = exp(ssm.log_delta)
    half = mul(delta, 0.5)
    ar, ai = ssm.A_re, ssm.A_im
    # den = 1 - half*a, num = 1 + half*a
    den_re = sub(1.0, mul(half, ar))
    den_im = mul(half, ai)  # negated imaginary part of den, i.e. conj(den).imag
    mag = add(mul(den_re, den_re), mul(den_im, den_im))
    bad = np.flatnonzero(mag.data == 0)
    if bad.size:
        raise SingularStepError(f"delta*a == 2 at entries {bad.tolist()}")
    # 1/den = conj(den)/|den|^2
    inv = ComplexPair(div(den_re, mag), div(den_im, mag))
    num = ComplexPair(add(1.0, mul(half, ar)), mul(half, ai))
    a_bar = num * inv
    scale = ComplexPair(mul(delta, inv.real), mul(delta, inv.imag))
    col = ComplexPair(scale.real.reshape(-1, 1), scale.imag.reshape(-1, 1))
    b_bar = col * ssm.B
    return DiscreteSsm(a_bar, b_bar, ssm.C, ssm.D)
