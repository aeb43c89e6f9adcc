"""Pure-Python step kernels.

Mirrors ``_ctd.pyx`` operation for operation (same summation order, same
branch structure) so both backends produce bit-identical iterates.
"""
from bisect import bisect_right
from math import sqrt

import numpy as np


def markov_walk(cumP, s0, u, out):
    """Fill ``out[0] = s0`` and ``out[i+1]`` = first index with ``cumP[out[i]] > u[i]``."""
    rows = cumP.tolist()
    last = len(rows) - 1
    s = int(s0)
    walk = [s]
    for x in u.tolist():
        s = bisect_right(rows[s], x)
        if s > last:
            s = last
        walk.append(s)
    out[:] = walk


def iid_draw(cum_pi, cumP, u, s_out, sn_out):
    """Inverse-CDF draws of ``s`` from ``cum_pi`` and ``s_next`` from row ``s`` of ``cumP``."""
    cp = cum_pi.tolist()
    rows = cumP.tolist()
    last = len(rows) - 1
    ss, nn = [], []
    for a, b in u.tolist():
        s = min(bisect_right(cp, a), last)
        ss.append(s)
        nn.append(min(bisect_right(rows[s], b), last))
    s_out[:] = ss
    sn_out[:] = nn


def td_chunk(Phi, s, sn, r, stop_reward, use_max, gamma, trace_decay, alphas, radius,
             theta, theta_bar, z, t_start, stride, rec_theta, rec_bar,
             check, bound_a, bound_b):
    """Run ``len(s)`` TD-family steps in place; see ``_ctd.td_chunk``."""
    rows = Phi.tolist()
    th = theta.tolist()
    bar = theta_bar.tolist()
    zz = z.tolist()
    U = stop_reward.tolist()
    d = len(th)
    rng_d = range(d)
    j = 0
    worst = -np.inf
    for i, (a, b, rew, alpha) in enumerate(zip(s.tolist(), sn.tolist(), r.tolist(),
                                               alphas.tolist())):
        t = t_start + i
        if stride > 0 and t % stride == 0:
            rec_theta[j, :] = th
            rec_bar[j, :] = bar
            j += 1
        inv = 1.0 / (t + 1)
        for q in rng_d:
            bar[q] += (th[q] - bar[q]) * inv
        phi = rows[a]
        phin = rows[b]
        v = 0.0
        vn = 0.0
        for q in rng_d:
            v += phi[q] * th[q]
            vn += phin[q] * th[q]
        if use_max and U[b] > vn:
            vn = U[b]
        delta = rew + gamma * vn - v
        for q in rng_d:
            zz[q] = trace_decay * zz[q] + phi[q]
        if check:
            nt = 0.0
            ns = 0.0
            for q in rng_d:
                nt += th[q] * th[q]
                x = delta * zz[q]
                ns += x * x
            excess = sqrt(ns) - (bound_a + bound_b * sqrt(nt))
            if excess > worst:
                worst = excess
        nrm2 = 0.0
        for q in rng_d:
            th[q] += alpha * (delta * zz[q])
            nrm2 += th[q] * th[q]
        nrm = sqrt(nrm2)
        if nrm > radius:
            sc = radius / nrm
            for q in rng_d:
                th[q] *= sc
    theta[:] = th
    theta_bar[:] = bar
    z[:] = zz
    return j, worst
