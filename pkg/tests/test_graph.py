import json

import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from grafflow.errors import (
    DimensionMismatch,
    DisconnectedGraph,
    GraphError,
    InvalidCondition,
    InvalidDegree,
    InvalidParameter,
    UnknownVertex,
)
from grafflow.graph import (
    VertexCondition,
    build_graph,
    delta_condition,
    delta_prime_condition,
    dipole_condition,
    dirichlet_condition,
    graph_from_dict,
    kirchhoff_condition,
    load_graph,
    neumann_condition,
    validate_condition,
)

from conftest import star


def exact_rank(a, b):
    m = sympy.Matrix(np.hstack([a, b]).tolist()).applyfunc(sympy.nsimplify)
    return m.rank()


# -- named conditions ------------------------------------------------------------


def test_kirchhoff_d2_matrices():
    c = kirchhoff_condition(2)
    np.testing.assert_array_equal(c.a_matrix, [[1, -1], [0, 0]])
    np.testing.assert_array_equal(c.b_matrix, [[0, 0], [1, 1]])


def test_kirchhoff_d1_is_neumann():
    c = kirchhoff_condition(1)
    np.testing.assert_array_equal(c.a_matrix, [[0]])
    np.testing.assert_array_equal(c.b_matrix, [[1]])
    np.testing.assert_array_equal(neumann_condition().b_matrix, [[1]])


def test_kirchhoff_zero_degree():
    with pytest.raises(InvalidDegree):
        kirchhoff_condition(0)
    with pytest.raises(InvalidDegree):
        delta_condition(0, 1.0)


def test_delta_matrices():
    c = delta_condition(2, -1.0)
    np.testing.assert_array_equal(c.a_matrix, [[1, -1], [1, 0]])
    np.testing.assert_array_equal(c.b_matrix, [[0, 0], [1, 1]])


def test_delta_prime_matrices_and_parameter():
    c = delta_prime_condition(1.0)
    np.testing.assert_array_equal(c.a_matrix, [[1, -1], [0, 0]])
    np.testing.assert_array_equal(c.b_matrix, [[0, -1], [1, 1]])
    assert validate_condition(delta_prime_condition(-1.0)).valid
    with pytest.raises(InvalidParameter):
        delta_prime_condition(0.0)


def test_dirichlet_and_dipole():
    c = dirichlet_condition()
    np.testing.assert_array_equal(c.a_matrix, [[1]])
    np.testing.assert_array_equal(c.b_matrix, [[0]])
    d = dipole_condition(1.0)
    np.testing.assert_array_equal(d.a_matrix, [[1, 1], [0, 0]])
    np.testing.assert_array_equal(d.b_matrix, [[0, 0], [1, -1]])
    assert validate_condition(dipole_condition(2.0)).valid
    with pytest.raises(InvalidParameter):
        dipole_condition(0.0)


def test_dipole_minus_one_is_continuity():
    # u1 = u2 with outgoing derivatives summing to zero: the Kirchhoff subspace
    d, k = dipole_condition(-1.0), kirchhoff_condition(2)
    rows_d = np.hstack([d.a_matrix, d.b_matrix])
    rows_k = np.hstack([k.a_matrix, k.b_matrix])
    assert np.linalg.matrix_rank(np.vstack([rows_d, rows_k])) == 2


@given(st.floats(-20, 20, allow_nan=False).filter(lambda t: abs(t) > 1e-6))
def test_dipole_self_adjoint_for_all_tau(tau):
    assert validate_condition(dipole_condition(tau)).valid


@pytest.mark.parametrize("cond", [
    kirchhoff_condition(2), kirchhoff_condition(3), kirchhoff_condition(4),
    delta_condition(2, -1.0), delta_condition(3, 0.7), delta_prime_condition(1.0),
    dirichlet_condition(), dipole_condition(2.0), dipole_condition(-0.5),
])
def test_named_conditions_exact_rank_and_symmetry(cond):
    a, b = np.asarray(cond.a_matrix), np.asarray(cond.b_matrix)
    assert exact_rank(a, b) == cond.dim
    ab = sympy.Matrix(a.tolist()) * sympy.Matrix(b.tolist()).T
    assert ab == ab.T
    assert validate_condition(cond).valid


@given(st.integers(1, 8), st.floats(-50, 50, allow_nan=False))
def test_constructors_valid_up_to_degree_8(d, alpha):
    assert validate_condition(kirchhoff_condition(d)).valid
    assert validate_condition(delta_condition(d, alpha)).valid


@given(st.integers(1, 8))
def test_delta_zero_matches_kirchhoff_subspace(d):
    k, z = kirchhoff_condition(d), delta_condition(d, 0.0)
    rk = np.hstack([k.a_matrix, k.b_matrix])
    rz = np.hstack([z.a_matrix, z.b_matrix])
    assert np.linalg.matrix_rank(np.vstack([rk, rz])) == d


def test_validate_reasons():
    assert validate_condition(VertexCondition(np.eye(1), np.zeros((1, 1)))).valid
    r = validate_condition(VertexCondition(np.zeros((2, 2)), np.zeros((2, 2))))
    assert not r.valid and r.reason == "RankDeficient"
    r = validate_condition(VertexCondition(np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]])))
    assert not r.valid and r.reason == "NonSymmetric"
    r = validate_condition(VertexCondition(np.eye(2), np.zeros((1, 1))))
    assert not r.valid and r.reason == "NotSquare"


# -- graphs ------------------------------------------------------------------------


def test_two_star_degrees():
    g = star(kirchhoff_condition(2), length=40.0)
    assert len(g.vertices) == 3
    assert {v: g.degree(v) for v in g.vertices} == {"O": 2, "L": 1, "R": 1}
    assert g.total_length == 80.0


def test_loop_degree_two():
    g = build_graph([("c", "v", "v", 3.0)], {"v": kirchhoff_condition(2)})
    assert g.degree("v") == 2
    assert g.slots("v") == (("c", "start"), ("c", "end"))
    assert g.edge("c").is_loop


def test_unknown_vertex():
    with pytest.raises(DimensionMismatch):
        build_graph([("e", "a", "b", 1.0)], {"a": dirichlet_condition(), "b": dirichlet_condition()},
                    vertices=["a"])
    assert issubclass(UnknownVertex, DimensionMismatch)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        star(kirchhoff_condition(3))


def test_disconnected():
    with pytest.raises(DisconnectedGraph):
        build_graph([("e", "a", "b", 1.0), ("f", "c", "d", 1.0)],
                    {v: dirichlet_condition() for v in "abcd"})


@pytest.mark.parametrize("length", [0.0, -1.0, float("inf"), float("nan")])
def test_bad_lengths(length):
    with pytest.raises(GraphError):
        build_graph([("e", "a", "b", length)], {"a": dirichlet_condition(), "b": dirichlet_condition()})


def test_invalid_condition_rejected():
    bad = VertexCondition(np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(InvalidCondition):
        star(bad)


def test_graph_json_roundtrip(tmp_path):
    spec = {
        "vertices": ["O", "L", "R"],
        "edges": [{"id": "e1", "start": "O", "end": "L", "length": 10},
                  ["e2", "O", "R", 10]],
        "conditions": {"O": {"type": "delta_prime", "beta": 1.0}},
        "default_condition": {"type": "dirichlet"},
    }
    p = tmp_path / "g.json"
    p.write_text(json.dumps(spec))
    g = load_graph(p)
    np.testing.assert_array_equal(g.conditions["O"].b_matrix, [[0, -1], [1, 1]])
    assert g.degree("L") == 1


def test_graph_json_matrix_condition_and_errors():
    g = graph_from_dict({
        "edges": [["e", "a", "b", 2.0]],
        "conditions": {"a": {"type": "matrix", "a": [[1.0]], "b": [[0.0]]},
                       "b": {"type": "neumann"}},
    })
    assert g.degree("a") == 1
    with pytest.raises(InvalidCondition):
        graph_from_dict({"edges": [["e", "a", "b", 2.0]], "conditions": {"a": {"type": "delta"}},
                         "default_condition": {"type": "neumann"}})
    with pytest.raises(InvalidCondition):
        graph_from_dict({"edges": [["e", "a", "b", 2.0]], "conditions": {"a": {"type": "bogus"}},
                         "default_condition": {"type": "neumann"}})
    with pytest.raises(GraphError):
        graph_from_dict({"edges": [{"id": "e"}]})
