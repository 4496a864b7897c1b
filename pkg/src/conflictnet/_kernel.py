"""Compiled Metropolis dyad-toggle chain.

Term codes: 0 dyadic (value read from ``cov``), 1 isolates, 2 mixed two-star,
3 mixed triangle, 4 gwesp, 5 degree. For codes 2-3 ``tvec``/``ovec`` hold the
same-type and opposite-type indicators of that term; ``fparam`` holds the
gwesp decay and ``iparam`` the degree.
"""
import math

import numpy as np
from numba import njit

DYADIC, ISOLATES, MIXED_TWO_STAR, MIXED_TRIANGLE, GWESP, DEGREE = range(6)


@njit(cache=True)
def _ind(flag):
    return 1.0 if flag else 0.0


@njit(cache=True)
def _delta(adj, deg, i, j, kinds, iparam, fparam, tvec, ovec, cov, out):
    n = adj.shape[0]
    e = adj[i, j]
    for t in range(kinds.shape[0]):
        kind = kinds[t]
        if kind == DYADIC:
            out[t] = cov[t, i, j]
        elif kind == ISOLATES or kind == DEGREE:
            di = deg[i] - e
            dj = deg[j] - e
            if kind == ISOLATES:
                out[t] = -_ind(di == 0) - _ind(dj == 0)
            else:
                k = iparam[t]
                out[t] = _ind(di + 1 == k) - _ind(di == k) + _ind(dj + 1 == k) - _ind(dj == k)
        elif kind == MIXED_TWO_STAR:
            T = tvec[t]
            O = ovec[t]
            ci = 0.0
            cj = 0.0
            for k in range(n):
                if adj[i, k]:
                    ci += T[k]
                if adj[j, k]:
                    cj += T[k]
            cj -= e * T[i]
            ci -= e * T[j]
            out[t] = T[i] * O[j] * cj + T[j] * O[i] * ci
        elif kind == MIXED_TRIANGLE:
            T = tvec[t]
            O = ovec[t]
            cn_t = 0.0
            cn_o = 0.0
            for k in range(n):
                if adj[i, k] and adj[j, k]:
                    cn_t += T[k]
                    cn_o += O[k]
            out[t] = T[i] * T[j] * cn_o + (T[i] * O[j] + O[i] * T[j]) * cn_t
        elif kind == GWESP:
            alpha = fparam[t]
            q = 1.0 - math.exp(-alpha)
            sp = 0
            acc = 0.0
            for k in range(n):
                if adj[i, k] and adj[j, k]:
                    sp += 1
                    sik = 0
                    sjk = 0
                    for l in range(n):
                        if adj[k, l]:
                            if adj[i, l]:
                                sik += 1
                            if adj[j, l]:
                                sjk += 1
                    acc += q ** (sik - e) + q ** (sjk - e)
            out[t] = math.exp(alpha) * (1.0 - q**sp) + acc


@njit(cache=True)
def run_steps(
    adj, deg, h, theta, kinds, iparam, fparam, tvec, ovec, cov,
    free_i, free_j, proposals, log_u, record, out_h, out_adj, store_adj, ptr,
):
    """Advance the chain by ``len(proposals)`` toggles; returns (next ptr, accepted)."""
    n_terms = kinds.shape[0]
    delta = np.zeros(n_terms)
    accepted = 0
    for s in range(proposals.shape[0]):
        d = proposals[s]
        i = free_i[d]
        j = free_j[d]
        _delta(adj, deg, i, j, kinds, iparam, fparam, tvec, ovec, cov, delta)
        eta = 0.0
        for t in range(n_terms):
            eta += theta[t] * delta[t]
        if adj[i, j]:
            eta = -eta
        if log_u[s] < eta:
            accepted += 1
            if adj[i, j]:
                adj[i, j] = 0
                adj[j, i] = 0
                deg[i] -= 1
                deg[j] -= 1
                for t in range(n_terms):
                    h[t] -= delta[t]
            else:
                adj[i, j] = 1
                adj[j, i] = 1
                deg[i] += 1
                deg[j] += 1
                for t in range(n_terms):
                    h[t] += delta[t]
        if record[s]:
            for t in range(n_terms):
                out_h[ptr, t] = h[t]
            if store_adj:
                out_adj[ptr] = adj
            ptr += 1
    return ptr, accepted
