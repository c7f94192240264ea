# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: water-level bisection and forward buffer filling.

Semantics match mobrelay._kernels.pure; these run inside the ellipsoid
dual-descent loop, so the per-call overhead matters.
"""

import numpy as np

BACKEND = "compiled"

cdef int _MAX_BISECT = 200


def waterfill(object gains_in, object weights_in, double budget):
    gains_arr = np.ascontiguousarray(gains_in, dtype=np.float64)
    weights_arr = np.ascontiguousarray(weights_in, dtype=np.float64)
    cdef const double[::1] g = gains_arr
    cdef const double[::1] w = weights_arr
    cdef Py_ssize_t n = g.shape[0]
    powers_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] p = powers_arr
    cdef Py_ssize_t i
    cdef double inv_sum = 0.0, w_sum = 0.0
    cdef double lo, hi, mid, total, tol, eta, v
    cdef double sup_inv, sup_w
    cdef int it, consistent

    if budget <= 0.0:
        return powers_arr, 0.0

    for i in range(n):
        if w[i] > 0.0:
            inv_sum += 1.0 / g[i]
            w_sum += w[i]
    lo = 0.0
    hi = (budget + inv_sum) / w_sum
    tol = 1e-12 * (1.0 if budget < 1.0 else budget)
    for it in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        total = 0.0
        for i in range(n):
            if w[i] > 0.0:
                v = mid * w[i] - 1.0 / g[i]
                if v > 0.0:
                    total += v
        if total - budget <= tol and budget - total <= tol:
            lo = mid
            hi = mid
            break
        if total < budget:
            lo = mid
        else:
            hi = mid
    eta = 0.5 * (lo + hi)

    # Exact polish on the support located by the bisection.
    sup_inv = 0.0
    sup_w = 0.0
    for i in range(n):
        if w[i] > 0.0 and eta * w[i] - 1.0 / g[i] > 0.0:
            sup_inv += 1.0 / g[i]
            sup_w += w[i]
    if sup_w > 0.0:
        mid = (budget + sup_inv) / sup_w
        consistent = 1
        for i in range(n):
            if w[i] > 0.0:
                if (eta * w[i] - 1.0 / g[i] > 0.0) != (mid * w[i] - 1.0 / g[i] > 0.0):
                    consistent = 0
                    break
        if consistent:
            eta = mid

    for i in range(n):
        if w[i] > 0.0:
            v = eta * w[i] - 1.0 / g[i]
            p[i] = v if v > 0.0 else 0.0
    return powers_arr, eta


def greedy_fill(object caps_in, object cum_supply_in):
    caps_arr = np.ascontiguousarray(caps_in, dtype=np.float64)
    supply_arr = np.ascontiguousarray(cum_supply_in, dtype=np.float64)
    cdef const double[::1] c = caps_arr
    cdef const double[::1] b = supply_arr
    cdef Py_ssize_t n = c.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out_arr
    cdef double sent = 0.0, r
    cdef Py_ssize_t k
    for k in range(n):
        r = b[k] - sent
        if r > c[k]:
            r = c[k]
        if r < 0.0:
            r = 0.0
        o[k] = r
        sent += r
    return out_arr
