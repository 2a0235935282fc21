# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Batched Thomas algorithm over the edge blocks of a graph operator."""
from libc.math cimport fabs

import numpy as np

cdef double PIVOT_RTOL = 1e-14


cdef Py_ssize_t _solve(const double[::1] diag, const double[::1] off,
                       const long long[::1] offsets, double[:, ::1] rhs,
                       double[::1] cp) noexcept nogil:
    cdef Py_ssize_t ncol = rhs.shape[1]
    cdef Py_ssize_t nblk = offsets.shape[0] - 1
    cdef Py_ssize_t e, i, j, lo, hi
    cdef double c, denom, inv
    for e in range(nblk):
        lo = offsets[e]
        hi = offsets[e + 1]
        if hi <= lo:
            continue
        c = off[e]
        denom = diag[lo]
        if denom == 0.0:
            return lo
        inv = 1.0 / denom
        cp[lo] = c * inv
        for j in range(ncol):
            rhs[lo, j] = rhs[lo, j] * inv
        for i in range(lo + 1, hi):
            denom = diag[i] - c * cp[i - 1]
            if fabs(denom) <= PIVOT_RTOL * fabs(diag[i]):
                return i
            inv = 1.0 / denom
            cp[i] = c * inv
            for j in range(ncol):
                rhs[i, j] = (rhs[i, j] - c * rhs[i - 1, j]) * inv
        for i in range(hi - 2, lo - 1, -1):
            for j in range(ncol):
                rhs[i, j] = rhs[i, j] - cp[i] * rhs[i + 1, j]
    return -1


def solve_edges(const double[::1] diag, const double[::1] off,
                const long long[::1] offsets, double[:, ::1] rhs):
    """Solve every tridiagonal edge block in place.

    Block ``e`` spans rows ``offsets[e]:offsets[e+1]``, has diagonal
    ``diag[rows]`` and the constant off-diagonal ``off[e]``.  ``rhs`` is
    ``(n, k)`` and is overwritten by the solution.  Returns -1 on success or
    the row of the first vanishing pivot.
    """
    cdef double[::1] cp = np.empty(diag.shape[0])
    cdef Py_ssize_t bad
    with nogil:
        bad = _solve(diag, off, offsets, rhs, cp)
    return bad
