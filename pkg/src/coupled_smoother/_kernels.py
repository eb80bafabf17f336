"""Compiled inner loops for index sampling; uniforms are always supplied
by the caller so results do not depend on numba's own RNG."""
import numpy as np
from numba import njit


@njit(cache=True)
def search_cdf(cdf, total, u):
    # first index with cdf[i] > u * total, clipped to the last index
    target = u * total
    lo = 0
    hi = cdf.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] <= target:
            lo = mid + 1
        else:
            hi = mid
    if lo >= cdf.shape[0]:
        lo = cdf.shape[0] - 1
    return lo


@njit(cache=True)
def inverse_cdf(probs, uniforms, out):
    n = probs.shape[0]
    cdf = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc += probs[i]
        cdf[i] = acc
    for k in range(uniforms.shape[0]):
        out[k] = search_cdf(cdf, acc, uniforms[k])
    return acc


@njit(cache=True)
def coupled_indices(p, q, u0, u1, u2, out_a, out_b):
    """Maximal coupling draws; returns 0 on success, 1 on degenerate input."""
    n = p.shape[0]
    cdf_c = np.empty(n)
    cdf_p = np.empty(n)
    cdf_q = np.empty(n)
    overlap = 0.0
    mass_p = 0.0
    mass_q = 0.0
    for i in range(n):
        c = p[i] if p[i] < q[i] else q[i]
        overlap += c
        mass_p += p[i] - c
        mass_q += q[i] - c
        cdf_c[i] = overlap
        cdf_p[i] = mass_p
        cdf_q[i] = mass_q
    if mass_p <= 0.0 or mass_q <= 0.0:
        # identical vectors: only the diagonal branch is reachable
        mass_p = 0.0
        if overlap <= 0.0:
            return 1
    for k in range(u0.shape[0]):
        if mass_p == 0.0 or u0[k] * (overlap + mass_p) < overlap:
            j = search_cdf(cdf_c, overlap, u1[k])
            out_a[k] = j
            out_b[k] = j
        else:
            out_a[k] = search_cdf(cdf_p, mass_p, u1[k])
            out_b[k] = search_cdf(cdf_q, mass_q, u2[k])
    return 0


@njit(cache=True)
def normalize_rows(lw, out):
    """Row-wise softmax into ``out``; returns the first bad row or -1."""
    S, n = lw.shape
    for s in range(S):
        top = -np.inf
        bad = False
        for i in range(n):
            v = lw[s, i]
            if v != v:
                bad = True
            elif v > top:
                top = v
        if bad or not np.isfinite(top):
            return s
        total = 0.0
        for i in range(n):
            e = np.exp(lw[s, i] - top)
            out[s, i] = e
            total += e
        for i in range(n):
            out[s, i] /= total
    return -1
