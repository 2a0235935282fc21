import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from grafflow import kernels
from grafflow.discretization import assemble_h, build_mesh
from grafflow.errors import LinearSolveFailure
from grafflow.graph import (
    build_graph,
    delta_condition,
    delta_prime_condition,
    dirichlet_condition,
    kirchhoff_condition,
)
from grafflow.linsolve import StructuredSystem, solve_linear

from conftest import star

SMALL_CASES = {
    "dirichlet_3": (lambda: build_graph([("e", "a", "b", 1.0)],
                                        {"a": dirichlet_condition(), "b": dirichlet_condition()}), 3),
    "kirchhoff_star_6": (lambda: star(kirchhoff_condition(2), 1.0), 3),
    "delta_star_8": (lambda: star(delta_condition(2, -1.0), 2.0), 4),
    "delta_prime_star_12": (lambda: star(delta_prime_condition(1.0), 3.0), 6),
    "loop_5": (lambda: build_graph([("c", "v", "v", 2.0)], {"v": kirchhoff_condition(2)}), 5),
    "signpost_12": (lambda: build_graph(
        [("l", "J", "W", 2.0), ("r", "J", "E", 2.0), ("s", "J", "T", 1.0), ("c", "T", "T", 1.5)],
        {"W": dirichlet_condition(), "E": dirichlet_condition(), "J": kirchhoff_condition(3),
         "T": kirchhoff_condition(3)}), 3),
}


def small_operator(name):
    build, n = SMALL_CASES[name]
    g = build()
    return assemble_h(g, build_mesh(g, per_edge_counts=n))


def test_identity_system():
    rhs = np.arange(5.0)
    np.testing.assert_array_equal(solve_linear(sp.identity(5), rhs), rhs)
    H = small_operator("kirchhoff_star_6")
    sysm = StructuredSystem(H, 0.0)
    np.testing.assert_allclose(sysm.solve(np.zeros(6), np.arange(6.0)), np.arange(6.0), atol=1e-15)


@pytest.mark.parametrize("kernel", kernels.available_backends())
@pytest.mark.parametrize("name", sorted(SMALL_CASES))
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), dt=st.sampled_from([1e-3, 1e-2, 1e-1]))
def test_small_systems_match_dense_elimination(name, kernel, seed, dt):
    H = small_operator(name)
    n = H.shape[0]
    assert n <= 12
    rng = np.random.default_rng(seed)
    g = rng.uniform(0, 2, n)
    rhs = rng.normal(size=n)
    M = np.eye(n) + dt * (H.toarray() - np.diag(g))
    x_dense = np.linalg.solve(M, rhs)
    s = StructuredSystem(H, dt, kernel=kernel)
    x_struct = s.solve(g, rhs)
    x_sparse = solve_linear(s.matrix(g), rhs, H.mesh.node_dx)
    scale = np.abs(x_dense).max()
    assert np.abs(x_struct - x_dense).max() <= 1e-12 * scale
    assert np.abs(x_sparse - x_dense).max() <= 1e-12 * scale


def test_structured_matches_sparse_on_large_mesh():
    g = build_graph([("l", "J", "W", 50.0), ("r", "J", "E", 50.0), ("s", "J", "T", 2.0),
                     ("c", "T", "T", 4.0)],
                    {"W": dirichlet_condition(), "E": dirichlet_condition(),
                     "J": kirchhoff_condition(3), "T": kirchhoff_condition(3)})
    H = assemble_h(g, build_mesh(g, total_points=3000))
    rng = np.random.default_rng(1)
    gv = rng.uniform(0, 1, 3000)
    rhs = rng.normal(size=3000)
    s = StructuredSystem(H, 1e-2)
    np.testing.assert_allclose(s.solve(gv, rhs), solve_linear(s.matrix(gv), rhs), rtol=1e-10, atol=1e-12)


def test_apply_is_matrix_product():
    H = small_operator("delta_prime_star_12")
    s = StructuredSystem(H, 0.05)
    g = np.linspace(0, 1, 12)
    x = np.cos(np.arange(12.0))
    np.testing.assert_allclose(s.apply(g, x), s.matrix(g) @ x, atol=1e-13)


def test_singular_sparse_system_raises():
    with pytest.raises(LinearSolveFailure):
        solve_linear(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])), np.array([1.0, 2.0]))


def test_structured_failure_on_zero_pivot():
    H = small_operator("dirichlet_3")
    s = StructuredSystem(H, 1.0)
    # 1 + dt (32 - g) = 0 on every diagonal entry: singular blocks
    with pytest.raises(LinearSolveFailure):
        s.solve(np.full(3, 33.0), np.ones(3))
