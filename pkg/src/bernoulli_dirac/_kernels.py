"""Compiled inner loops for long transfer-matrix products."""
import math

import numpy as np
from numba import njit

# renormalize every STRIDE steps, or earlier once an entry exceeds BIG
STRIDE = 16
BIG = 1e100


@njit(cache=True)
def _norm2(a, b, c, d):
    # largest singular value of [[a, b], [c, d]]
    f = abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + abs(d) ** 2
    det = abs(a * d - b * c)
    disc = f * f - 4.0 * det * det
    if disc < 0.0:
        disc = 0.0
    return math.sqrt(0.5 * (f + math.sqrt(disc)))


@njit(cache=True)
def log_norm_product(E, values, m, c):
    """``ln ||T(v_{N-1}) ... T(v_0)||`` for real energy ``E``."""
    mc2 = m * c * c
    m2c4 = mc2 * mc2
    inv_c = 1.0 / c
    inv_c2 = inv_c * inv_c
    a, b, cc, d = 1.0, 0.0, 0.0, 1.0
    log_scale = 0.0
    for i in range(values.shape[0]):
        alpha = E - values[i]
        t11 = 1.0 + (m2c4 - alpha * alpha) * inv_c2
        t12 = (mc2 + alpha) * inv_c
        t21 = (mc2 - alpha) * inv_c
        na = t11 * a + t12 * cc
        nb = t11 * b + t12 * d
        nc = t21 * a + cc
        nd = t21 * b + d
        a, b, cc, d = na, nb, nc, nd
        if (i + 1) % STRIDE == 0 or abs(a) > BIG or abs(b) > BIG or abs(cc) > BIG or abs(d) > BIG:
            s = _norm2(a, b, cc, d)
            a /= s
            b /= s
            cc /= s
            d /= s
            log_scale += math.log(s)
    return log_scale + math.log(_norm2(a, b, cc, d))


@njit(cache=True)
def complex_product(E, values, m, c):
    """Normalized product and accumulated log scale at complex energy."""
    mc2 = m * c * c
    m2c4 = mc2 * mc2
    a = 1.0 + 0.0j
    b = 0.0 + 0.0j
    cc = 0.0 + 0.0j
    d = 1.0 + 0.0j
    log_scale = 0.0
    for i in range(values.shape[0]):
        alpha = E - values[i]
        t11 = 1.0 + (m2c4 - alpha * alpha) / (c * c)
        t12 = (mc2 + alpha) / c
        t21 = (mc2 - alpha) / c
        na = t11 * a + t12 * cc
        nb = t11 * b + t12 * d
        nc = t21 * a + cc
        nd = t21 * b + d
        a, b, cc, d = na, nb, nc, nd
        if (i + 1) % STRIDE == 0 or abs(a) > BIG or abs(b) > BIG or abs(cc) > BIG or abs(d) > BIG:
            s = _norm2(a, b, cc, d)
            a /= s
            b /= s
            cc /= s
            d /= s
            log_scale += math.log(s)
    out = np.empty((2, 2), dtype=np.complex128)
    out[0, 0] = a
    out[0, 1] = b
    out[1, 0] = cc
    out[1, 1] = d
    return out, log_scale


@njit(cache=True)
def pair_supremum(E, values, m, c, max_span):
    """``max ||T(E; n, k)||`` over ``0 <= k <= n <= len(values)``, ``n - k <= max_span``."""
    mc2 = m * c * c
    m2c4 = mc2 * mc2
    N = values.shape[0]
    t11 = np.empty(N)
    t12 = np.empty(N)
    t21 = np.empty(N)
    for i in range(N):
        alpha = E - values[i]
        t11[i] = 1.0 + (m2c4 - alpha * alpha) / (c * c)
        t12[i] = (mc2 + alpha) / c
        t21[i] = (mc2 - alpha) / c
    best = 1.0
    for k in range(N):
        a, b, cc, d = 1.0, 0.0, 0.0, 1.0
        stop = min(N, k + max_span)
        for i in range(k, stop):
            na = t11[i] * a + t12[i] * cc
            nb = t11[i] * b + t12[i] * d
            nc = t21[i] * a + cc
            nd = t21[i] * b + d
            a, b, cc, d = na, nb, nc, nd
            s = _norm2(a, b, cc, d)
            if s > best:
                best = s
    return best
