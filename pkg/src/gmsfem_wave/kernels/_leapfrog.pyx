# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-stepping kernel."""
import numpy as np


def leapfrog_blocks(const long long[::1] blk_ptr, const long long[::1] brow_ptr,
                    const long long[::1] bcol, const long long[::1] boff,
                    const double[::1] data, double[::1] u_prev, double[::1] u,
                    const double[::1] g, const double[::1] tfac, double dt2):
    """Advance ``len(tfac)`` steps of ``u+ = 2u - u- - dt2 (A u - tfac[n] g)``
    in place.

    ``A`` is block sparse: block row ``b`` couples to the column blocks
    ``bcol[brow_ptr[b]:brow_ptr[b+1]]`` whose dense column-major entries start
    at ``boff``.  On return ``u_prev``/``u`` hold the last two states.
    """
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t nsteps = tfac.shape[0]
    cdef Py_ssize_t nb = blk_ptr.shape[0] - 1
    cdef Py_ssize_t step, i, j, b, q, c, s, d, sc, dc, o, dmax = 0
    cdef bint has_load = g.shape[0] == n
    cdef double tf, xj
    for b in range(nb):
        if blk_ptr[b + 1] - blk_ptr[b] > dmax:
            dmax = blk_ptr[b + 1] - blk_ptr[b]
    cdef double[::1] y = np.empty(max(dmax, 1))
    cdef double[::1] prev = u_prev
    cdef double[::1] cur = u
    cdef double[::1] tmp
    for step in range(nsteps):
        tf = tfac[step]
        for b in range(nb):
            s = blk_ptr[b]
            d = blk_ptr[b + 1] - s
            for i in range(d):
                y[i] = 0.0
            for q in range(brow_ptr[b], brow_ptr[b + 1]):
                c = bcol[q]
                sc = blk_ptr[c]
                dc = blk_ptr[c + 1] - sc
                o = boff[q]
                for j in range(dc):
                    xj = cur[sc + j]
                    for i in range(d):
                        y[i] += data[o + j * d + i] * xj
            if has_load:
                for i in range(d):
                    y[i] -= tf * g[s + i]
            # prev[s+i] is only read here, so the new state can overwrite it
            for i in range(d):
                prev[s + i] = 2.0 * cur[s + i] - prev[s + i] - dt2 * y[i]
        tmp = prev
        prev = cur
        cur = tmp
    if nsteps % 2 == 1:
        for i in range(n):
            xj = u[i]
            u[i] = u_prev[i]
            u_prev[i] = xj
