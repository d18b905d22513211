"""Pure-numpy Blelloch scan; same contract as the compiled ``_scan_ext``."""

from __future__ import annotations

import numpy as np


def blelloch_inplace(a: np.ndarray, b: np.ndarray, d: np.ndarray) -> int:
    """Inclusive reset-aware scan along axis 0, written into ``b``.

    a, b: (P, M, N) complex, d: (P, M) float, P a power of two. ``a`` and ``d``
    are clobbered. Returns the number of vectorised combine stages (2 log2 P).
    Element n combines as
    ``(a_i, b_i, d_i) . (a_j, b_j, d_j) = ((1-d_i) a_j a_i, (1-d_i) a_j b_i + b_j, d_j)``.
    """
    P = a.shape[0]
    if P & (P - 1):
        raise ValueError(f"scan length {P} is not a power of two")
    a0, b0 = a.copy(), b.copy()
    stages = 0

    s = 1
    while s < P:
        left, right = slice(s - 1, P, 2 * s), slice(2 * s - 1, P, 2 * s)
        k = (1.0 - d[left])[..., None]
        ka = k * a[right]
        b[right] = ka * b[left] + b[right]
        a[right] = ka * a[left]
        stages += 1
        s *= 2

    a[P - 1], b[P - 1], d[P - 1] = 1.0, 0.0, 0.0
    s = P // 2
    while s >= 1:
        left, right = slice(s - 1, P, 2 * s), slice(2 * s - 1, P, 2 * s)
        al, bl, dl = a[left].copy(), b[left].copy(), d[left].copy()
        ar, br, dr = a[right], b[right], d[right]
        a[left], b[left], d[left] = ar, br, dr
        ka = (1.0 - dr)[..., None] * al
        a[right] = ka * ar
        b[right] = ka * br + bl
        d[right] = dl
        stages += 1
        s //= 2

    b *= ((1.0 - d)[..., None] * a0)
    b += b0
    return stages
