"""Metric graphs and local vertex conditions ``A u(v) + B u'(v) = 0``.

Traces ``u(v)`` and derivatives ``u'(v)`` are indexed by *slots*: one slot
per (edge, endpoint) pair touching the vertex, so a loop contributes two
slots to its vertex.  ``u'(v)`` is always the derivative along the edge in
the direction pointing away from the vertex.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from os import PathLike
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DisconnectedGraph,
    GraphError,
    InvalidCondition,
    InvalidDegree,
    InvalidParameter,
    UnknownVertex,
)

START = "start"
END = "end"

SYMMETRY_TOL = 1e-12
RANK_RTOL = 1e-10

Slot = tuple[str, str]


@dataclass(frozen=True)
class Edge:
    id: str
    start: Any
    end: Any
    length: float

    @property
    def is_loop(self) -> bool:
        return self.start == self.end


@dataclass(frozen=True, eq=False)
class VertexCondition:
    """Matrix pair (A_v, B_v); ``slot_order`` fixes row/column meaning."""

    a_matrix: np.ndarray
    b_matrix: np.ndarray
    slot_order: tuple[Slot, ...] | None = None
    name: str = "matrix"

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_matrix, dtype=float))
        b = np.atleast_2d(np.asarray(self.b_matrix, dtype=float))
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_matrix", b)
        if self.slot_order is not None:
            object.__setattr__(self, "slot_order", tuple(tuple(s) for s in self.slot_order))

    @property
    def dim(self) -> int:
        return self.a_matrix.shape[0]

    def with_slots(self, slots: Sequence[Slot]) -> "VertexCondition":
        return VertexCondition(self.a_matrix, self.b_matrix, tuple(slots), self.name)


class ConditionCheck(NamedTuple):
    valid: bool
    reason: str | None = None  # "RankDeficient" | "NonSymmetric" | "NotSquare"

    def __bool__(self):
        return self.valid


def validate_condition(cond: VertexCondition) -> ConditionCheck:
    """Self-adjointness test: rank (A|B) = d and A B^T symmetric."""
    a, b = cond.a_matrix, cond.b_matrix
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape != b.shape:
        return ConditionCheck(False, "NotSquare")
    d = a.shape[0]
    ab = np.hstack([a, b])
    scale = np.abs(ab).max(initial=0.0)
    if scale == 0.0:
        return ConditionCheck(False, "RankDeficient")
    if np.linalg.matrix_rank(ab, tol=RANK_RTOL * scale) < d:
        return ConditionCheck(False, "RankDeficient")
    p = a @ b.T
    if np.abs(p - p.T).max() > SYMMETRY_TOL:
        return ConditionCheck(False, "NonSymmetric")
    return ConditionCheck(True)


# -- named condition families ------------------------------------------------


def _check_degree(d):
    if int(d) != d or d < 1:
        raise InvalidDegree(f"vertex degree must be a positive integer, got {d!r}")
    return int(d)


def _kirchhoff_b(d):
    b = np.zeros((d, d))
    b[-1, :] = 1.0
    return b


def kirchhoff_condition(d: int) -> VertexCondition:
    """Continuity of the traces plus zero sum of outgoing derivatives."""
    d = _check_degree(d)
    a = np.zeros((d, d))
    for i in range(d - 1):
        a[i, i] = 1.0
        a[i, i + 1] = -1.0
    return VertexCondition(a, _kirchhoff_b(d), name="kirchhoff")


def delta_condition(d: int, alpha: float) -> VertexCondition:
    """Continuity plus ``sum_e u_e'(v) = alpha u(v)``."""
    cond = kirchhoff_condition(d)
    a = cond.a_matrix.copy()
    a[-1, 0] = -float(alpha)
    return VertexCondition(a, cond.b_matrix, name="delta")


def delta_prime_condition(beta: float) -> VertexCondition:
    """``u_1(v) = u_2(v) + beta u_2'(v)`` and ``u_1'(v) + u_2'(v) = 0``."""
    if beta == 0:
        raise InvalidParameter("delta_prime needs beta != 0; use kirchhoff_condition(2)")
    a = np.array([[1.0, -1.0], [0.0, 0.0]])
    b = np.array([[0.0, -float(beta)], [1.0, 1.0]])
    return VertexCondition(a, b, name="delta_prime")


def dirichlet_condition() -> VertexCondition:
    return VertexCondition(np.array([[1.0]]), np.array([[0.0]]), name="dirichlet")


def neumann_condition() -> VertexCondition:
    return VertexCondition(np.array([[0.0]]), np.array([[1.0]]), name="neumann")


def dipole_condition(tau: float) -> VertexCondition:
    """``u_1 + tau u_2 = 0`` and ``tau u_1' - u_2' = 0`` (outgoing derivatives).

    The derivative row is the one that makes ``A B^T`` symmetric for every
    ``tau``; ``tau = -1`` gives continuity with matching slopes across the
    vertex.
    """
    if tau == 0:
        raise InvalidParameter("dipole condition with tau=0 decouples the edges")
    a = np.array([[1.0, float(tau)], [0.0, 0.0]])
    b = np.array([[0.0, 0.0], [float(tau), -1.0]])
    return VertexCondition(a, b, name="dipole")


# -- graph ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MetricGraph:
    vertices: tuple
    edges: tuple[Edge, ...]
    conditions: Mapping[Any, VertexCondition] = field(repr=False)

    def edge(self, edge_id: str) -> Edge:
        return self._edge_index[edge_id]

    @property
    def _edge_index(self):
        idx = self.__dict__.get("_eidx")
        if idx is None:
            idx = {e.id: e for e in self.edges}
            object.__setattr__(self, "_eidx", idx)
        return idx

    def degree(self, v) -> int:
        return len(incident_slots(self.edges, v))

    def slots(self, v) -> tuple[Slot, ...]:
        return self.conditions[v].slot_order

    def slot_vertex(self, slot: Slot):
        e = self.edge(slot[0])
        return e.start if slot[1] == START else e.end

    @property
    def total_length(self) -> float:
        return sum(e.length for e in self.edges)


def incident_slots(edges: Iterable[Edge], v) -> list[Slot]:
    out = []
    for e in edges:
        if e.start == v:
            out.append((e.id, START))
        if e.end == v:
            out.append((e.id, END))
    return out


def _as_edge(item) -> Edge:
    if isinstance(item, Edge):
        return item
    if isinstance(item, Mapping):
        eid, v1, v2, length = item["id"], item["start"], item["end"], item["length"]
    else:
        eid, v1, v2, length = item
    return Edge(str(eid), v1, v2, float(length))


def build_graph(edge_list, condition_map: Mapping, vertices: Sequence | None = None) -> MetricGraph:
    """Validate and assemble a metric graph.

    ``edge_list`` items are :class:`Edge`, ``(id, v1, v2, length)`` tuples or
    mappings with those keys.  Conditions without an explicit ``slot_order``
    get the incidence order of ``edge_list`` (start slot before end slot).
    """
    edges = tuple(_as_edge(e) for e in edge_list)
    if not edges:
        raise GraphError("edge list is empty")
    ids = [e.id for e in edges]
    if len(set(ids)) != len(ids):
        raise GraphError("duplicate edge ids")
    for e in edges:
        if not (math.isfinite(e.length) and e.length > 0):
            raise GraphError(f"edge {e.id!r} has invalid length {e.length!r}")

    if vertices is None:
        seen = {}
        for e in edges:
            seen.setdefault(e.start, None)
            seen.setdefault(e.end, None)
        vertices = tuple(seen)
    else:
        vertices = tuple(vertices)
        known = set(vertices)
        for e in edges:
            for v in (e.start, e.end):
                if v not in known:
                    raise UnknownVertex(f"edge {e.id!r} references undeclared vertex {v!r}")

    adjacency = {v: set() for v in vertices}
    for e in edges:
        adjacency[e.start].add(e.end)
        adjacency[e.end].add(e.start)
    todo, reached = deque([vertices[0]]), {vertices[0]}
    while todo:
        for w in adjacency[todo.popleft()] - reached:
            reached.add(w)
            todo.append(w)
    if len(reached) != len(vertices):
        raise DisconnectedGraph(f"unreachable vertices: {sorted(map(str, set(vertices) - reached))}")

    conditions = {}
    for v in vertices:
        if v not in condition_map:
            raise InvalidCondition(f"no condition given for vertex {v!r}")
        cond = condition_map[v]
        slots = incident_slots(edges, v)
        if cond.dim != len(slots):
            raise DimensionMismatch(
                f"vertex {v!r}: condition has size {cond.dim} but degree is {len(slots)}"
            )
        if cond.slot_order is None:
            cond = cond.with_slots(slots)
        elif sorted(cond.slot_order) != sorted(slots):
            raise DimensionMismatch(f"vertex {v!r}: slot_order {cond.slot_order} != incident {slots}")
        check = validate_condition(cond)
        if not check:
            raise InvalidCondition(f"vertex {v!r}: {check.reason}")
        conditions[v] = cond
    return MetricGraph(vertices, edges, conditions)


# -- JSON description ------------------------------------------------------------

_NAMED = {
    "kirchhoff": lambda d, p: kirchhoff_condition(d),
    "neumann": lambda d, p: kirchhoff_condition(d),
    "delta": lambda d, p: delta_condition(d, p["alpha"]),
    "delta_prime": lambda d, p: delta_prime_condition(p["beta"]),
    "dirichlet": lambda d, p: dirichlet_condition() if d == 1 else _dirichlet_multi(d),
    "dipole": lambda d, p: dipole_condition(p["tau"]),
}


def _dirichlet_multi(d):
    return VertexCondition(np.eye(d), np.zeros((d, d)), name="dirichlet")


def condition_from_spec(spec: Mapping, degree: int) -> VertexCondition:
    kind = spec.get("type", "matrix")
    if kind == "matrix":
        cond = VertexCondition(spec["a"], spec["b"])
    elif kind in _NAMED:
        try:
            cond = _NAMED[kind](degree, spec)
        except KeyError as exc:
            raise InvalidCondition(f"condition {kind!r} is missing parameter {exc}") from None
    else:
        raise InvalidCondition(f"unknown condition type {kind!r}")
    if "slots" in spec:
        cond = cond.with_slots([tuple(s) for s in spec["slots"]])
    return cond


def graph_from_dict(data: Mapping) -> MetricGraph:
    try:
        edges = [_as_edge(e) for e in data["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphError(f"malformed edge list: {exc!r}") from None
    vertices = data.get("vertices")
    specs = dict(data.get("conditions", {}))
    default = data.get("default_condition")
    names = vertices if vertices is not None else list(dict.fromkeys(
        v for e in edges for v in (e.start, e.end)))
    conditions = {}
    for v in names:
        spec = specs.get(v, default)
        if spec is None:
            raise InvalidCondition(f"no condition given for vertex {v!r}")
        conditions[v] = condition_from_spec(spec, len(incident_slots(edges, v)))
    return build_graph(edges, conditions, vertices)


def load_graph(path: str | PathLike) -> MetricGraph:
    with open(path, encoding="utf-8") as fh:
        return graph_from_dict(json.load(fh))
