"""NumPy implementations of the hot kernels.

Same signatures as the compiled ``_kernels`` module.  Row ranges
``[start, stop)`` let callers split work without changing results.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse


def _csr(indptr, indices, weights, start, stop):
    lo, hi = indptr[start], indptr[stop]
    return sparse.csr_matrix(
        (weights[lo:hi], indices[lo:hi], indptr[start:stop + 1] - lo),
        shape=(stop - start, len(indptr) - 1),
    )


def impact(indptr, indices, weights, p, s, sigma, beta, norm, start=0, stop=None):
    stop = len(indptr) - 1 if stop is None else stop
    W = _csr(indptr, indices, weights, start, stop)
    sg = sigma.astype(np.float64)
    own = sg[start:stop]
    cross_p = W @ p - own * (W @ (p * sg))
    cross_s = W @ s + own * (W @ (s * sg))
    return (cross_p - cross_s) / norm - 2.0 * beta * s[start:stop] / norm


def sync_step(indptr, indices, weights, p, s, sigma, noise, beta, norm, out, start=0, stop=None):
    stop = len(indptr) - 1 if stop is None else stop
    own = sigma[start:stop]
    arg = own * impact(indptr, indices, weights, p, s, sigma, beta, norm, start, stop)
    if noise is not None:
        arg = arg + noise[start:stop]
    new = np.where(arg > 0, -1, np.where(arg < 0, 1, own)).astype(np.int8)
    out[start:stop] = new
    return int(np.count_nonzero(new != own))


def mean_field_step(indptr, indices, weights, p, s, sigma, a, norm, out, start=0, stop=None):
    stop = len(indptr) - 1 if stop is None else stop
    W = _csr(indptr, indices, weights, start, stop)
    m = (W @ ((s + p) * sigma)) / norm
    own = sigma[start:stop]
    am = np.abs(a[start:stop])
    mm = np.abs(m)
    new = own.copy()
    maj = mm > am
    new[maj] = np.sign(m[maj])
    slf = am > mm
    new[slf] = own[slf] * np.sign(a[start:stop][slf])
    out[start:stop] = new.astype(np.int8)
    return int(np.count_nonzero(out[start:stop] != own))


def label_components(indptr, indices, state):
    """Connected same-state components; labels ordered by smallest member."""
    n = len(indptr) - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    same = state[rows] == state[indices]
    g = sparse.csr_matrix((np.ones(int(same.sum())), (rows[same], indices[same])), shape=(n, n))
    _, raw = sparse.csgraph.connected_components(g, directed=False)
    # renumber by first occurrence so label order follows smallest member index
    _, first = np.unique(raw, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return remap[raw].astype(np.int64)


def laplacian(u, dx, periodic):
    out = np.zeros_like(u)
    for axis in range(u.ndim):
        if u.shape[axis] == 1:
            continue
        if periodic:
            fwd = np.roll(u, -1, axis)
            bwd = np.roll(u, 1, axis)
        else:
            pad = [(0, 0)] * u.ndim
            pad[axis] = (1, 1)
            ext = np.pad(u, pad, mode="edge")
            fwd = np.take(ext, np.arange(2, u.shape[axis] + 2), axis=axis)
            bwd = np.take(ext, np.arange(0, u.shape[axis]), axis=axis)
        out += ((fwd + bwd) - 2.0 * u) / (dx * dx)
    return out


def field_rhs(v, f, gamma, alpha, dx, periodic):
    out = -v + f * v - gamma * v**3
    if alpha != 0.0:
        out = out + alpha * laplacian(f * v, dx, periodic)
    return out


def field_step(v, f, gamma, alpha, dx, dt, periodic):
    return v + dt * field_rhs(v, f, gamma, alpha, dx, periodic)
