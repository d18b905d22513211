"""Central finite-difference oracle for the reverse pass."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


class NonDeterministicError(ValueError):
    pass


def _scalar(out) -> float:
    return float(out.data if isinstance(out, Tensor) else out)


def finite_diff_check(
    fn: Callable[[Tensor], Tensor],
    at,
    step: float = 1e-5,
    coords: Sequence[int] | None = None,
) -> float:
    """Max over coordinates of |analytic - central| / max(1e-8, |central|).

    ``coords`` restricts the check to a subset of flat indices.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    x = np.array(at.data if isinstance(at, Tensor) else at, dtype=np.float64)
    with no_grad():
        first, second = _scalar(fn(Tensor(x.copy()))), _scalar(fn(Tensor(x.copy())))
    if first != second and not (np.isnan(first) and np.isnan(second)):
        raise NonDeterministicError(f"fn returned {first!r} then {second!r} at the same point")

    p = Tensor(x.copy(), requires_grad=True)
    (analytic,) = backward(fn(p), [p])
    analytic = analytic.reshape(-1)

    flat = x.reshape(-1)
    idx = range(flat.size) if coords is None else coords
    worst = 0.0
    with no_grad():
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = _scalar(fn(Tensor(x.copy())))
            flat[i] = orig - step
            fm = _scalar(fn(Tensor(x.copy())))
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * step)
            err = abs(analytic[i] - numeric) / max(1e-8, abs(numeric))
            worst = max(worst, err)
    return worst
