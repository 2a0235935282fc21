"""Finite differences on metric graphs.

Each edge carries a uniform grid of ``N_e`` interior nodes; only interior
nodes are unknowns.  Vertex traces are eliminated with the second order
one-sided derivative

    u'(v) ~ -(3 u_0 - 4 u_{-1} + u_{-2}) / (2 dx)

(``u_{-1}``, ``u_{-2}`` are the two interior nodes closest to the vertex and
``u'(v)`` points away from the vertex), which turns ``A u(v) + B u'(v) = 0``
into ``u_0 = C_v (4 u_{-1} - u_{-2})`` with ``C_v = (3B - 2 dx A)^{-1} B``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import MeshTooCoarse, SingularTraceSystem
from .graph import START, MetricGraph, VertexCondition

MIN_NODES = 3
MAX_TRACE_COND = 1e12


@dataclass(frozen=True, eq=False)
class Mesh:
    graph: MetricGraph
    counts: Mapping[str, int]
    dx: Mapping[str, float]
    offsets: Mapping[str, int]
    n_total: int
    node_dx: np.ndarray = field(repr=False)
    edge_of_node: np.ndarray = field(repr=False)

    def nodes(self, edge_id) -> slice:
        o = self.offsets[edge_id]
        return slice(o, o + self.counts[edge_id])

    def coordinates(self, edge_id) -> np.ndarray:
        return self.dx[edge_id] * np.arange(1, self.counts[edge_id] + 1)

    def index(self, edge_id, k: int) -> int:
        """Global index of interior node ``k`` (1-based, as x_{e,k} = k dx_e)."""
        if not 1 <= k <= self.counts[edge_id]:
            raise IndexError(k)
        return self.offsets[edge_id] + k - 1

    def end_nodes(self, edge_id, tag) -> tuple[int, int]:
        """(closest, second closest) interior node to the given endpoint."""
        s = self.nodes(edge_id)
        if tag == START:
            return s.start, s.start + 1
        return s.stop - 1, s.stop - 2

    @property
    def max_dx(self) -> float:
        return max(self.dx.values())


class GraphFunction:
    """Values at the interior nodes of a mesh."""

    __slots__ = ("values", "mesh")

    def __init__(self, values, mesh: Mesh):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_total,):
            raise ValueError(f"expected {mesh.n_total} values, got shape {values.shape}")
        self.values = values
        self.mesh = mesh

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def on_edge(self, edge_id) -> np.ndarray:
        return self.values[self.mesh.nodes(edge_id)]


def _counts_from_total(graph, total):
    lengths = np.array([e.length for e in graph.edges])
    share = total * lengths / lengths.sum()
    counts = np.floor(share).astype(int)
    leftover = int(total - counts.sum())
    for i in np.argsort(-(share - counts), kind="stable")[:leftover]:
        counts[i] += 1
    return {e.id: int(c) for e, c in zip(graph.edges, counts)}


def build_mesh(graph: MetricGraph, target_dx=None, per_edge_counts=None, total_points=None) -> Mesh:
    """Uniform interior grid on every edge.

    Exactly one of ``target_dx`` (``N_e = round(l_e / dx) - 1``),
    ``per_edge_counts`` (int or mapping edge id -> N_e) or ``total_points``
    (distributed proportionally to edge length) must be given.
    """
    given = [x is not None for x in (target_dx, per_edge_counts, total_points)]
    if sum(given) != 1:
        raise ValueError("give exactly one of target_dx, per_edge_counts, total_points")
    if target_dx is not None:
        if target_dx <= 0:
            raise ValueError("target_dx must be positive")
        counts = {e.id: int(round(e.length / target_dx)) - 1 for e in graph.edges}
    elif total_points is not None:
        counts = _counts_from_total(graph, int(total_points))
    elif isinstance(per_edge_counts, Mapping):
        counts = {e.id: int(per_edge_counts[e.id]) for e in graph.edges}
    else:
        counts = {e.id: int(per_edge_counts) for e in graph.edges}

    coarse = {k: n for k, n in counts.items() if n < MIN_NODES}
    if coarse:
        raise MeshTooCoarse(f"edges need at least {MIN_NODES} interior nodes: {coarse}")

    dx, offsets, o = {}, {}, 0
    node_dx, edge_of_node = [], []
    for i, e in enumerate(graph.edges):
        n = counts[e.id]
        dx[e.id] = e.length / (n + 1)
        offsets[e.id] = o
        node_dx.append(np.full(n, dx[e.id]))
        edge_of_node.append(np.full(n, i))
        o += n
    return Mesh(graph, counts, dx, offsets, o, np.concatenate(node_dx), np.concatenate(edge_of_node))


# -- trace elimination ------------------------------------------------------------


def trace_coefficients(condition: VertexCondition, dx) -> np.ndarray:
    """``C_v`` such that ``u_0 = C_v (4 u_{-1} - u_{-2})``.

    ``dx`` is a scalar or one spacing per slot.
    """
    a, b = condition.a_matrix, condition.b_matrix
    d = a.shape[0]
    dx = np.broadcast_to(np.asarray(dx, dtype=float), (d,))
    system = 3.0 * b - 2.0 * a * dx[None, :]
    try:
        cnum = np.linalg.cond(system)
    except np.linalg.LinAlgError:
        cnum = np.inf
    if not np.isfinite(cnum) or cnum > MAX_TRACE_COND:
        raise SingularTraceSystem(
            f"trace system for {condition.name!r} condition is singular at dx={dx} (cond={cnum:.3g})",
            cnum,
        )
    # (3 B D^-1 - 2 A) u_0 = B D^-1 (4 u_{-1} - u_{-2})
    return np.linalg.solve(system / dx[None, :], b / dx[None, :])


@dataclass(frozen=True, eq=False)
class TraceMap:
    """Linear map from interior values to the trace at each edge end.

    ``matrix`` has one row per edge end, row ``2 i`` for the start and
    ``2 i + 1`` for the end of ``graph.edges[i]``.
    """

    mesh: Mesh
    coefficients: Mapping  # vertex -> C_v
    matrix: sp.csr_matrix = field(repr=False)
    end_weights: np.ndarray = field(repr=False)  # dx_e / 2 per edge end

    def end_values(self, values) -> np.ndarray:
        return self.matrix @ np.asarray(values, dtype=float)

    def slot_row(self, slot) -> int:
        i = self.mesh.graph.edges.index(self.mesh.graph.edge(slot[0]))
        return 2 * i + (0 if slot[1] == START else 1)


def build_trace_map(mesh: Mesh) -> TraceMap:
    graph = mesh.graph
    row_of = {}
    for i, e in enumerate(graph.edges):
        row_of[(e.id, START)] = 2 * i
        row_of[(e.id, "end")] = 2 * i + 1
    coeffs, rows, cols, vals = {}, [], [], []
    for v in graph.vertices:
        cond = graph.conditions[v]
        slots = cond.slot_order
        c = trace_coefficients(cond, [mesh.dx[s[0]] for s in slots])
        coeffs[v] = c
        near = [mesh.end_nodes(*s) for s in slots]
        for i, si in enumerate(slots):
            for j, (n1, n2) in enumerate(near):
                if c[i, j] != 0.0:
                    rows += [row_of[si], row_of[si]]
                    cols += [n1, n2]
                    vals += [4.0 * c[i, j], -c[i, j]]
    n_ends = 2 * len(graph.edges)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n_ends, mesh.n_total))
    w = np.repeat([0.5 * mesh.dx[e.id] for e in graph.edges], 2)
    return TraceMap(mesh, coeffs, mat, w)


def reconstruct_traces(field, trace_map: TraceMap) -> dict:
    """Vertex -> array of traces, ordered like the vertex's slots."""
    ends = trace_map.end_values(field)
    out = {}
    for v, cond in trace_map.mesh.graph.conditions.items():
        out[v] = np.array([ends[trace_map.slot_row(s)] for s in cond.slot_order])
    return out


# -- quadrature -------------------------------------------------------------------


class Norms(NamedTuple):
    l2_norm: float
    l4_norm: float
    mass: float


def integrate(node_values, end_values, trace_map: TraceMap) -> float:
    """Composite trapezoid given values at interior nodes and edge ends."""
    return float(trace_map.mesh.node_dx @ node_values + trace_map.end_weights @ end_values)


def mass(field, trace_map: TraceMap) -> float:
    u = np.asarray(field, dtype=float)
    t = trace_map.end_values(u)
    return integrate(u * u, t * t, trace_map)


def weighted_norms(field, trace_map: TraceMap) -> Norms:
    u = np.asarray(field, dtype=float)
    t = trace_map.end_values(u)
    u2, t2 = u * u, t * t
    m = integrate(u2, t2, trace_map)
    q = integrate(u2 * u2, t2 * t2, trace_map)
    return Norms(float(np.sqrt(m)), float(q ** 0.25), m)


def node_norm(values, mesh: Mesh) -> float:
    """dx-weighted l2 norm over interior nodes only (no vertex terms)."""
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(mesh.node_dx @ (v * v)))


# -- operator assembly ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteLaplacian:
    """``[H]``, the discretization of ``-d^2/dx^2`` with the vertex conditions.

    Split as a per-edge tridiagonal part (``diag``, ``off``) plus the
    vertex coupling entries (``coupling``, COO triplets) for the structured
    solver; ``matrix`` holds the sum in CSR form.
    """

    mesh: Mesh
    trace_map: TraceMap
    matrix: sp.csr_matrix = field(repr=False)
    diag: np.ndarray = field(repr=False)
    off: np.ndarray = field(repr=False)  # one constant off-diagonal per edge
    coupling: tuple = field(repr=False)  # (rows, cols, vals)
    extrapolation: sp.csr_matrix = field(repr=False)

    def __matmul__(self, x):
        return self.matrix @ x

    @property
    def shape(self):
        return self.matrix.shape

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def inner(self, field) -> float:
        """Trapezoid approximation of ``<H u, u>`` (vertex values of ``H u``
        extrapolated linearly from the two nearest nodes)."""
        u = np.asarray(field, dtype=float)
        hu = self.matrix @ u
        return integrate(hu * u, (self.extrapolation @ hu) * self.trace_map.end_values(u), self.trace_map)


def assemble_h(graph: MetricGraph, mesh: Mesh, trace_map: TraceMap | None = None) -> DiscreteLaplacian:
    if mesh.graph is not graph:
        raise ValueError("mesh was built for a different graph")
    if trace_map is None:
        trace_map = build_trace_map(mesh)
    n = mesh.n_total
    diag = 2.0 / mesh.node_dx ** 2
    off = np.array([-1.0 / mesh.dx[e.id] ** 2 for e in graph.edges])

    rows, cols, vals = [], [], []
    for v in graph.vertices:
        cond = graph.conditions[v]
        c = trace_map.coefficients[v]
        if not c.any():
            continue
        near = [mesh.end_nodes(*s) for s in cond.slot_order]
        for i, si in enumerate(cond.slot_order):
            r = near[i][0]
            h2 = mesh.dx[si[0]] ** 2
            for j, (n1, n2) in enumerate(near):
                if c[i, j] != 0.0:
                    rows += [r, r]
                    cols += [n1, n2]
                    vals += [-4.0 * c[i, j] / h2, c[i, j] / h2]
    coupling = (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(vals))

    lower = np.repeat(off, [mesh.counts[e.id] for e in graph.edges])
    # no off-diagonal across edge boundaries
    starts = np.array([mesh.offsets[e.id] for e in graph.edges])
    sub = lower[1:].copy()
    sub[starts[1:] - 1] = 0.0
    tri = sp.diags([sub, diag, sub], [-1, 0, 1], shape=(n, n), format="csr")
    cpl = sp.csr_matrix((coupling[2], (coupling[0], coupling[1])), shape=(n, n))
    matrix = (tri + cpl).tocsr()
    matrix.sum_duplicates()
    matrix.eliminate_zeros()

    xr, xc, xv = [], [], []
    for i, e in enumerate(graph.edges):
        for row, tag in ((2 * i, START), (2 * i + 1, "end")):
            n1, n2 = mesh.end_nodes(e.id, tag)
            xr += [row, row]
            xc += [n1, n2]
            xv += [2.0, -1.0]
    extrap = sp.csr_matrix((xv, (xr, xc)), shape=(2 * len(graph.edges), n))
    return DiscreteLaplacian(mesh, trace_map, matrix, diag, off, coupling, extrap)


def dump_coo(op: DiscreteLaplacian, path) -> None:
    """Write the nonzeros of ``[H]`` as ``row col value`` lines."""
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {op.shape[0]} {op.shape[1]} {coo.nnz}\n")
        for k in order:
            fh.write(f"{coo.row[k]} {coo.col[k]} {float(coo.data[k])!r}\n")
