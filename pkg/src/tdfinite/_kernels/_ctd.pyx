# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled step kernels.

Built without fast-math or FMA contraction so results match the pure-Python
backend bit for bit.
"""
from libc.math cimport sqrt, INFINITY
from libc.stdint cimport int64_t


def markov_walk(const double[:, ::1] cumP, int64_t s0, const double[::1] u, int64_t[::1] out):
    cdef Py_ssize_t k = u.shape[0], n = cumP.shape[0], i, lo, hi, mid
    cdef int64_t s = s0
    cdef double x
    out[0] = s
    for i in range(k):
        x = u[i]
        lo = 0
        hi = n - 1
        while lo < hi:
            mid = (lo + hi) >> 1
            if cumP[s, mid] > x:
                hi = mid
            else:
                lo = mid + 1
        s = lo
        out[i + 1] = s


def iid_draw(const double[::1] cum_pi, const double[:, ::1] cumP, const double[:, ::1] u,
             int64_t[::1] s_out, int64_t[::1] sn_out):
    """Row i: ``s`` = first index with ``cum_pi > u[i, 0]``, then ``s_next``
    from row ``s`` of ``cumP`` against ``u[i, 1]``."""
    cdef Py_ssize_t k = u.shape[0], n = cumP.shape[0], i, lo, hi, mid, s
    cdef double x
    for i in range(k):
        x = u[i, 0]
        lo = 0
        hi = n - 1
        while lo < hi:
            mid = (lo + hi) >> 1
            if cum_pi[mid] > x:
                hi = mid
            else:
                lo = mid + 1
        s = lo
        s_out[i] = s
        x = u[i, 1]
        lo = 0
        hi = n - 1
        while lo < hi:
            mid = (lo + hi) >> 1
            if cumP[s, mid] > x:
                hi = mid
            else:
                lo = mid + 1
        sn_out[i] = lo


def td_chunk(const double[:, ::1] Phi, const int64_t[::1] s, const int64_t[::1] sn,
             const double[::1] r, const double[::1] stop_reward, bint use_max,
             double gamma, double trace_decay, const double[::1] alphas, double radius,
             double[::1] theta, double[::1] theta_bar, double[::1] z,
             int64_t t_start, int64_t stride, double[:, ::1] rec_theta, double[:, ::1] rec_bar,
             bint check, double bound_a, double bound_b):
    """Run ``len(s)`` steps of the shared TD / trace / stopping recursion in place.

    Per step: fold theta into the running mean, form the temporal difference
    (optionally capped below by the stop reward of the next state), update
    the trace, step, and rescale onto the radius-``radius`` ball.  Snapshots
    of (theta, theta_bar) are written every ``stride`` global steps.
    Returns the number of snapshots and, when ``check`` is set, the largest
    excess of the step norm over ``bound_a + bound_b * ||theta||``.
    """
    cdef Py_ssize_t k = s.shape[0], d = theta.shape[0], i, q
    cdef int64_t t, a, b
    cdef Py_ssize_t j = 0
    cdef double inv, v, vn, delta, nt, ns, x, excess, nrm2, nrm, sc, alpha
    cdef double worst = -INFINITY
    for i in range(k):
        t = t_start + i
        if stride > 0 and t % stride == 0:
            for q in range(d):
                rec_theta[j, q] = theta[q]
                rec_bar[j, q] = theta_bar[q]
            j += 1
        inv = 1.0 / (t + 1)
        for q in range(d):
            theta_bar[q] += (theta[q] - theta_bar[q]) * inv
        a = s[i]
        b = sn[i]
        v = 0.0
        vn = 0.0
        for q in range(d):
            v += Phi[a, q] * theta[q]
            vn += Phi[b, q] * theta[q]
        if use_max and stop_reward[b] > vn:
            vn = stop_reward[b]
        delta = r[i] + gamma * vn - v
        for q in range(d):
            z[q] = trace_decay * z[q] + Phi[a, q]
        if check:
            nt = 0.0
            ns = 0.0
            for q in range(d):
                nt += theta[q] * theta[q]
                x = delta * z[q]
                ns += x * x
            excess = sqrt(ns) - (bound_a + bound_b * sqrt(nt))
            if excess > worst:
                worst = excess
        alpha = alphas[i]
        nrm2 = 0.0
        for q in range(d):
            theta[q] += alpha * (delta * z[q])
            nrm2 += theta[q] * theta[q]
        nrm = sqrt(nrm2)
        if nrm > radius:
            sc = radius / nrm
            for q in range(d):
                theta[q] *= sc
    return j, worst
