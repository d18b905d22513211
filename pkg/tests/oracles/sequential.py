"""Independent reference implementations used as test oracles.

These are deliberately naive loops that share no code with the package.
"""

import numpy as np


def reset_recurrence(a, bu, is_first, x0=None):
    """x_n = (1 - is_first_n) * a * x_{n-1} + bu_n, one step at a time."""
    a = np.asarray(a, np.complex128)
    bu = np.asarray(bu, np.complex128)
    M, L, N = bu.shape
    x = np.zeros((M, N), np.complex128) if x0 is None else np.asarray(x0, np.complex128).copy()
    out = np.empty_like(bu)
    for t in range(L):
        x = (1 - np.asarray(is_first)[:, t, None]) * a * x + bu[:, t]
        out[:, t] = x
    return out


def done_recurrence(a, bu, dones, x0):
    """Scalar-done form: a done at step n clears the state before step n+1."""
    x = np.asarray(x0, np.complex128).copy()
    out = []
    prev_done = 0.0
    for n in range(len(bu)):
        x = (1 - prev_done) * a * x + bu[n]
        out.append(x.copy())
        prev_done = dones[n]
    return np.array(out)


def lambda_returns_explicit(r, c, v, gamma, lam):
    """O(H^2) forward expansion of the lambda-return.

    R_i = sum_{n<H-i} (1-lam) lam^(n-1) G_i^(n) + lam^(H-i-1) G_i^(H-i), with G^(n)
    the n-step bootstrapped return. Rewards/conts are indexed by transition
    (H entries), values by state (H+1 entries).
    """
    H = len(r)
    out = np.empty(H + 1)
    out[H] = v[H]
    for i in range(H):
        total = 0.0
        # n-step return from state i looking n steps ahead
        for n in range(1, H - i + 1):
            disc, g = 1.0, 0.0
            for k in range(n):
                g += disc * r[i + k]
                disc *= gamma * c[i + k]
            g += disc * v[i + n]
            w = (1 - lam) * lam ** (n - 1) if n < H - i else lam ** (n - 1)
            total += w * g
        out[i] = total
    return out


def categorical_kl(q, p):
    q, p = np.asarray(q, np.float64), np.asarray(p, np.float64)
    return float(np.sum(q * (np.log(q) - np.log(p))))
