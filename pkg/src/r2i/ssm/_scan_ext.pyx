# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled Blelloch scan; same contract as ``_scan_py.blelloch_inplace``.

Complex arrays are handled through their interleaved real views so the inner
loops are plain float arithmetic the compiler can vectorise.
"""

import numpy as np

ctypedef fused real:
    float
    double


cdef void _scan(real[:, :, ::1] a, real[:, :, ::1] b, real[:, ::1] d,
                real[:, :, ::1] a0, real[:, :, ::1] b0) noexcept nogil:
    cdef Py_ssize_t P = a.shape[0], M = a.shape[1], N2 = a.shape[2]
    cdef Py_ssize_t s, l, r, m, n
    cdef real k, kar, kai, alr, ali, arr, ari, blr, bli, brr, bri, dl, dr, xr, xi
    cdef real *pa
    cdef real *pb
    cdef real *qa
    cdef real *qb

    s = 1
    while s < P:
        r = 2 * s - 1
        while r < P:
            l = r - s
            for m in range(M):
                k = 1 - d[l, m]
                pa = &a[l, m, 0]
                pb = &b[l, m, 0]
                qa = &a[r, m, 0]
                qb = &b[r, m, 0]
                for n in range(0, N2, 2):
                    kar = k * qa[n]
                    kai = k * qa[n + 1]
                    qb[n] = kar * pb[n] - kai * pb[n + 1] + qb[n]
                    qb[n + 1] = kar * pb[n + 1] + kai * pb[n] + qb[n + 1]
                    qa[n] = kar * pa[n] - kai * pa[n + 1]
                    qa[n + 1] = kar * pa[n + 1] + kai * pa[n]
            r += 2 * s
        s *= 2

    for m in range(M):
        d[P - 1, m] = 0
        for n in range(0, N2, 2):
            a[P - 1, m, n] = 1
            a[P - 1, m, n + 1] = 0
            b[P - 1, m, n] = 0
            b[P - 1, m, n + 1] = 0

    s = P // 2
    while s >= 1:
        r = 2 * s - 1
        while r < P:
            l = r - s
            for m in range(M):
                dl = d[l, m]
                dr = d[r, m]
                k = 1 - dr
                pa = &a[l, m, 0]
                pb = &b[l, m, 0]
                qa = &a[r, m, 0]
                qb = &b[r, m, 0]
                for n in range(0, N2, 2):
                    alr = pa[n]
                    ali = pa[n + 1]
                    blr = pb[n]
                    bli = pb[n + 1]
                    arr = qa[n]
                    ari = qa[n + 1]
                    brr = qb[n]
                    bri = qb[n + 1]
                    pa[n] = arr
                    pa[n + 1] = ari
                    pb[n] = brr
                    pb[n + 1] = bri
                    kar = k * alr
                    kai = k * ali
                    qa[n] = kar * arr - kai * ari
                    qa[n + 1] = kar * ari + kai * arr
                    qb[n] = kar * brr - kai * bri + blr
                    qb[n + 1] = kar * bri + kai * brr + bli
                d[l, m] = dr
                d[r, m] = dl
            r += 2 * s
        s //= 2

    for l in range(P):
        for m in range(M):
            k = 1 - d[l, m]
            pa = &a0[l, m, 0]
            pb = &b[l, m, 0]
            qb = &b0[l, m, 0]
            for n in range(0, N2, 2):
                xr = pb[n]
                xi = pb[n + 1]
                pb[n] = k * (pa[n] * xr - pa[n + 1] * xi) + qb[n]
                pb[n + 1] = k * (pa[n] * xi + pa[n + 1] * xr) + qb[n + 1]


def blelloch_inplace(a, b, d):
    """a, b: (P, M, N) C-contiguous complex; d: (P, M) real of matching precision."""
    P = a.shape[0]
    if P & (P - 1):
        raise ValueError(f"scan length {P} is not a power of two")
    if b.shape != a.shape or d.shape != a.shape[:2]:
        raise ValueError(f"shapes disagree: a {a.shape}, b {b.shape}, d {d.shape}")
    if a.dtype != b.dtype or a.dtype.kind != "c":
        raise TypeError(f"a and b must share a complex dtype, got {a.dtype}, {b.dtype}")
    rdt = np.float32 if a.dtype == np.complex64 else np.float64
    if d.dtype != rdt:
        raise TypeError(f"d must be {np.dtype(rdt)}, got {d.dtype}")
    av = a.view(rdt)
    bv = b.view(rdt)
    if rdt == np.float32:
        _scan[float](av, bv, d, av.copy(), bv.copy())
    else:
        _scan[double](av, bv, d, av.copy(), bv.copy())
