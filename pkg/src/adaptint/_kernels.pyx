# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: CSR sweeps for the automaton and stencils for the field.

Signatures match ``adaptint._pykernels``.  Every kernel reads only from its
frozen inputs and writes disjoint output rows, so callers may split the row
range across threads without changing a single bit of the result.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t idx_t
ctypedef cnp.int8_t spin_t


cdef inline double _impact_row(const idx_t[::1] indptr, const idx_t[::1] indices,
                               const double[::1] weights, const double[::1] p,
                               const double[::1] s, const spin_t[::1] sigma,
                               double beta, double norm, Py_ssize_t i) noexcept nogil:
    cdef double acc = 0.0
    cdef double prod
    cdef Py_ssize_t k, j
    for k in range(indptr[i], indptr[i + 1]):
        j = indices[k]
        prod = sigma[i] * sigma[j]
        acc += weights[k] * (p[j] * (1.0 - prod) - s[j] * (1.0 + prod))
    return acc / norm - 2.0 * beta * s[i] / norm


def impact(const idx_t[::1] indptr, const idx_t[::1] indices, const double[::1] weights,
           const double[::1] p, const double[::1] s, const spin_t[::1] sigma,
           double beta, double norm, Py_ssize_t start=0, stop=None):
    cdef Py_ssize_t hi = indptr.shape[0] - 1 if stop is None else stop
    cdef cnp.ndarray[double, ndim=1] res = np.empty(hi - start)
    cdef double[::1] out = res
    cdef Py_ssize_t i
    with nogil:
        for i in range(start, hi):
            out[i - start] = _impact_row(indptr, indices, weights, p, s, sigma, beta, norm, i)
    return res


def sync_step(const idx_t[::1] indptr, const idx_t[::1] indices, const double[::1] weights,
              const double[::1] p, const double[::1] s, const spin_t[::1] sigma,
              noise, double beta, double norm, spin_t[::1] out,
              Py_ssize_t start=0, stop=None):
    cdef Py_ssize_t hi = indptr.shape[0] - 1 if stop is None else stop
    cdef const double[::1] h
    cdef bint has_noise = noise is not None
    if has_noise:
        h = noise
    cdef Py_ssize_t i
    cdef long flips = 0
    cdef double arg
    with nogil:
        for i in range(start, hi):
            arg = sigma[i] * _impact_row(indptr, indices, weights, p, s, sigma, beta, norm, i)
            if has_noise:
                arg = arg + h[i]
            if arg > 0:
                out[i] = -1
            elif arg < 0:
                out[i] = 1
            else:
                out[i] = sigma[i]
            if out[i] != sigma[i]:
                flips += 1
    return flips


def mean_field_step(const idx_t[::1] indptr, const idx_t[::1] indices, const double[::1] weights,
                    const double[::1] p, const double[::1] s, const spin_t[::1] sigma,
                    const double[::1] a, double norm, spin_t[::1] out,
                    Py_ssize_t start=0, stop=None):
    cdef Py_ssize_t hi = indptr.shape[0] - 1 if stop is None else stop
    cdef Py_ssize_t i, k, j
    cdef long flips = 0
    cdef double m, am, mm
    with nogil:
        for i in range(start, hi):
            m = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                m += weights[k] * ((s[j] + p[j]) * sigma[j])
            m = m / norm
            mm = m if m >= 0 else -m
            am = a[i] if a[i] >= 0 else -a[i]
            if mm > am:
                out[i] = 1 if m > 0 else -1
            elif am > mm:
                out[i] = sigma[i] if a[i] > 0 else -sigma[i]
            else:
                out[i] = sigma[i]
            if out[i] != sigma[i]:
                flips += 1
    return flips


cdef idx_t _find(idx_t[::1] parent, idx_t x) noexcept nogil:
    cdef idx_t root = x
    cdef idx_t nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


def label_components(const idx_t[::1] indptr, const idx_t[::1] indices, state):
    """Union-find over same-state edges; labels ordered by smallest member."""
    cdef const spin_t[::1] st = np.ascontiguousarray(state, dtype=np.int8)
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[idx_t, ndim=1] parent_arr = np.arange(n, dtype=np.int64)
    cdef cnp.ndarray[idx_t, ndim=1] labels_arr = np.full(n, -1, dtype=np.int64)
    cdef idx_t[::1] parent = parent_arr
    cdef idx_t[::1] labels = labels_arr
    cdef Py_ssize_t i, k
    cdef idx_t ri, rj, nxt = 0
    with nogil:
        for i in range(n):
            for k in range(indptr[i], indptr[i + 1]):
                if st[indices[k]] != st[i]:
                    continue
                ri = _find(parent, i)
                rj = _find(parent, indices[k])
                if ri < rj:
                    parent[rj] = ri
                elif rj < ri:
                    parent[ri] = rj
        # roots are the smallest members, so a forward scan numbers clusters in order
        for i in range(n):
            ri = _find(parent, i)
            if labels[ri] < 0:
                labels[ri] = nxt
                nxt += 1
            labels[i] = labels[ri]
    return labels_arr


cdef inline Py_ssize_t _nb(Py_ssize_t c, Py_ssize_t size, int d, bint periodic) noexcept nogil:
    c += d
    if c < 0:
        return size - 1 if periodic else 0
    if c >= size:
        return 0 if periodic else size - 1
    return c


cdef void _rhs3(const double[:, :, ::1] v, const double[:, :, ::1] f, double[:, :, ::1] out,
                double gamma, double alpha, double dx, bint periodic) noexcept nogil:
    cdef Py_ssize_t n0 = v.shape[0], n1 = v.shape[1], n2 = v.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double x, lap, inv = 1.0 / (dx * dx), c
    for i in range(n0):
        for j in range(n1):
            for k in range(n2):
                x = v[i, j, k]
                out[i, j, k] = -x + f[i, j, k] * x - gamma * (x * x * x)
                if alpha == 0.0:
                    continue
                c = 2.0 * (f[i, j, k] * x)
                lap = 0.0
                if n0 > 1:
                    lap = lap + ((f[_nb(i, n0, 1, periodic), j, k] * v[_nb(i, n0, 1, periodic), j, k]
                                  + f[_nb(i, n0, -1, periodic), j, k] * v[_nb(i, n0, -1, periodic), j, k]) - c) * inv
                if n1 > 1:
                    lap = lap + ((f[i, _nb(j, n1, 1, periodic), k] * v[i, _nb(j, n1, 1, periodic), k]
                                  + f[i, _nb(j, n1, -1, periodic), k] * v[i, _nb(j, n1, -1, periodic), k]) - c) * inv
                if n2 > 1:
                    lap = lap + ((f[i, j, _nb(k, n2, 1, periodic)] * v[i, j, _nb(k, n2, 1, periodic)]
                                  + f[i, j, _nb(k, n2, -1, periodic)] * v[i, j, _nb(k, n2, -1, periodic)]) - c) * inv
                out[i, j, k] = out[i, j, k] + alpha * lap


def _as3(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    return a.reshape(a.shape + (1,) * (3 - a.ndim))


def field_rhs(v, f, double gamma, double alpha, double dx, bint periodic):
    shape = np.shape(v)
    v3, f3 = _as3(v), _as3(f)
    out = np.empty_like(v3)
    cdef double[:, :, ::1] o = out
    cdef const double[:, :, ::1] vv = v3
    cdef const double[:, :, ::1] ff = f3
    with nogil:
        _rhs3(vv, ff, o, gamma, alpha, dx, periodic)
    return out.reshape(shape)


def field_step(v, f, double gamma, double alpha, double dx, double dt, bint periodic):
    shape = np.shape(v)
    v3, f3 = _as3(v), _as3(f)
    out = np.empty_like(v3)
    cdef double[:, :, ::1] o = out
    cdef const double[:, :, ::1] vv = v3
    cdef const double[:, :, ::1] ff = f3
    cdef Py_ssize_t i, j, k
    with nogil:
        _rhs3(vv, ff, o, gamma, alpha, dx, periodic)
        for i in range(o.shape[0]):
            for j in range(o.shape[1]):
                for k in range(o.shape[2]):
                    o[i, j, k] = vv[i, j, k] + dt * o[i, j, k]
    return out.reshape(shape)
