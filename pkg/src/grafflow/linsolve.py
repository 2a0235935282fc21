"""Linear solves for ``[M] = Id + dt ([H] - diag(g))``.

Two routes share one contract:

* :func:`solve_linear` -- general sparse LU on the assembled matrix.
* :class:`StructuredSystem` -- per-edge tridiagonal solves (compiled kernel
  when available) plus a Woodbury correction for the few rows carrying
  vertex couplings.  Cost is O(N_T) plus a dense solve of size equal to the
  number of coupled rows.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .discretization import DiscreteLaplacian
from .errors import LinearSolveFailure

RESIDUAL_RTOL = 1e-10


def _norm(v, weights):
    return float(np.sqrt(np.dot(weights, v * v))) if weights is not None else float(np.linalg.norm(v))


def solve_linear(system, rhs, weights=None, rtol=RESIDUAL_RTOL) -> np.ndarray:
    """Sparse direct solve with a residual check in the ``weights`` norm."""
    rhs = np.asarray(rhs, dtype=float)
    system = sp.csc_matrix(system)
    try:
        x = spla.splu(system).solve(rhs)
    except RuntimeError as exc:  # exactly singular factor
        raise LinearSolveFailure(f"sparse LU failed: {exc}") from None
    res = _norm(system @ x - rhs, weights)
    scale = _norm(rhs, weights)
    if not np.isfinite(res) or res > rtol * max(scale, np.finfo(float).tiny):
        raise LinearSolveFailure(f"residual {res:.3e} exceeds {rtol:g} * {scale:.3e}", res)
    return x


class StructuredSystem:
    """Factor-free solver for ``Id + dt([H] - diag(g))`` on one operator.

    Build once per (operator, dt); call :meth:`solve` with the current
    diagonal ``g`` values each iteration.
    """

    def __init__(self, op: DiscreteLaplacian, dt: float, kernel=None):
        self.op = op
        self.dt = float(dt)
        self.kernel = kernels.get_kernel(kernel)
        mesh = op.mesh
        edges = mesh.graph.edges
        n = mesh.n_total
        self.n = n
        self.offsets = np.array([mesh.offsets[e.id] for e in edges] + [n], dtype=np.int64)
        self.off = np.ascontiguousarray(self.dt * op.off)
        self.edge_of_node = mesh.edge_of_node
        self.n_edges = len(edges)

        first = self.offsets[:-1]
        last = self.offsets[1:] - 1
        self._units = np.zeros((n, 3))
        self._units[first, 1] = 1.0
        self._units[last, 2] = 1.0

        rows, cols, vals = op.coupling
        coupled = np.unique(rows)
        self.r = coupled.size
        local = {int(g): i for i, g in enumerate(coupled)}
        self.row_edge = self.edge_of_node[coupled]
        self.row_kind = np.where(np.isin(coupled, first), 1, 2)
        self.W = sp.csr_matrix(
            (self.dt * vals, ([local[int(g)] for g in rows], cols)), shape=(self.r, n)
        )
        # K[i, j] += W[i, c] * Z_kind(j)[c] whenever c lies on the edge of row j
        pi, pj, pc, pk, pv = [], [], [], [], []
        col_edge = self.edge_of_node[cols]
        for i_loc, c, ce, v in zip((local[int(g)] for g in rows), cols, col_edge, vals):
            for j in np.nonzero(self.row_edge == ce)[0]:
                pi.append(i_loc)
                pj.append(j)
                pc.append(c)
                pk.append(self.row_kind[j])
                pv.append(self.dt * v)
        self._pairs = (np.array(pi, dtype=int), np.array(pj, dtype=int),
                       np.array(pc, dtype=int), np.array(pk, dtype=int), np.array(pv))

    def diagonal(self, gvals) -> np.ndarray:
        return 1.0 + self.dt * (self.op.diag - gvals)

    def matrix(self, gvals) -> sp.csr_matrix:
        """Assembled ``[M]``; used by the sparse route and by tests."""
        return (sp.identity(self.n, format="csr")
                + self.dt * (self.op.matrix - sp.diags(np.asarray(gvals, dtype=float)))).tocsr()

    def apply(self, gvals, x) -> np.ndarray:
        return x + self.dt * (self.op.matrix @ x - gvals * x)

    def solve(self, gvals, rhs, check=True) -> np.ndarray:
        gvals = np.asarray(gvals, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        work = self._units.copy()
        work[:, 0] = rhs
        bad = self.kernel.solve_edges(np.ascontiguousarray(self.diagonal(gvals)), self.off, self.offsets, work)
        if bad >= 0:
            raise LinearSolveFailure(f"zero pivot in edge block at row {bad}")
        x0 = work[:, 0]
        if self.r:
            pi, pj, pc, pk, pv = self._pairs
            K = np.eye(self.r)
            np.add.at(K, (pi, pj), pv * work[pc, pk])
            try:
                s = np.linalg.solve(K, self.W @ x0)
            except np.linalg.LinAlgError:
                raise LinearSolveFailure("singular vertex capacitance matrix") from None
            sf = np.zeros(self.n_edges)
            sl = np.zeros(self.n_edges)
            sf[self.row_edge[self.row_kind == 1]] = s[self.row_kind == 1]
            sl[self.row_edge[self.row_kind == 2]] = s[self.row_kind == 2]
            x = x0 - work[:, 1] * sf[self.edge_of_node] - work[:, 2] * sl[self.edge_of_node]
        else:
            x = x0
        if check:
            w = self.op.mesh.node_dx
            res = _norm(self.apply(gvals, x) - rhs, w)
            scale = _norm(rhs, w)
            if not np.isfinite(res) or res > RESIDUAL_RTOL * max(scale, np.finfo(float).tiny):
                raise LinearSolveFailure(f"structured solve residual {res:.3e}", res)
        return x
