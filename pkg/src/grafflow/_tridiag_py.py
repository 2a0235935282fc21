"""Fallback for the compiled ``_tridiag`` kernel (LAPACK banded solves)."""
import numpy as np
from scipy.linalg import LinAlgError, solve_banded


def solve_edges(diag, off, offsets, rhs):
    """Same contract as the compiled kernel: solves in place, returns -1 or
    the first row of a singular block."""
    for e in range(len(offsets) - 1):
        lo, hi = int(offsets[e]), int(offsets[e + 1])
        if hi <= lo:
            continue
        ab = np.empty((3, hi - lo))
        ab[0, :] = off[e]
        ab[1, :] = diag[lo:hi]
        ab[2, :] = off[e]
        try:
            rhs[lo:hi] = solve_banded((1, 1), ab, rhs[lo:hi], check_finite=False)
        except (LinAlgError, ValueError):
            return lo
    return -1
