import numpy as np
import pytest

from grafflow.graph import build_graph, dirichlet_condition

ACCEPTANCE_LINES: list[str] = []


def star(center, length=30.0, exterior=None):
    """Two edges O->L and O->R meeting at O; Dirichlet at the far ends by default."""
    ext = exterior or dirichlet_condition()
    return build_graph(
        [("e1", "O", "L", length), ("e2", "O", "R", length)],
        {"O": center, "L": ext, "R": ext},
    )


def dense_h_oracle(graph, counts):
    """Dense ``-u''`` matrix built from scratch, column by column.

    Traces come from solving ``A t + B (-3 t + 4 u1 - u2) / (2 dx) = 0`` at
    each vertex, the one-sided second-order derivative pointing into the
    edge.  Shares nothing with the package beyond the graph object.
    """
    offs, o = {}, 0
    for e in graph.edges:
        offs[e.id] = o
        o += counts[e.id]
    n = o
    dx = {e.id: e.length / (counts[e.id] + 1) for e in graph.edges}

    def near(slot):
        eid, tag = slot
        a = offs[eid]
        b = a + counts[eid] - 1
        return (a, a + 1) if tag == "start" else (b, b - 1)

    def traces(u):
        out = {}
        for v, cond in graph.conditions.items():
            slots = cond.slot_order
            A, B = np.asarray(cond.a_matrix, float), np.asarray(cond.b_matrix, float)
            h = np.array([dx[s[0]] for s in slots])
            u1 = np.array([u[near(s)[0]] for s in slots])
            u2 = np.array([u[near(s)[1]] for s in slots])
            # A t + B diag(1/(2h)) (-3 t + 4 u1 - u2) = 0
            Bh = B / (2.0 * h)[None, :]
            t = np.linalg.solve(A - 3.0 * Bh, -Bh @ (4.0 * u1 - u2))
            for s, val in zip(slots, t):
                out[s] = val
        return out

    H = np.zeros((n, n))
    for j in range(n):
        u = np.zeros(n)
        u[j] = 1.0
        t = traces(u)
        for e in graph.edges:
            N, h, a = counts[e.id], dx[e.id], offs[e.id]
            ext = np.concatenate([[t[(e.id, "start")]], u[a:a + N], [t[(e.id, "end")]]])
            H[a:a + N, j] = -(ext[:-2] - 2.0 * ext[1:-1] + ext[2:]) / h ** 2
    return H


def slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@pytest.fixture
def acceptance():
    """Record one summary line per acceptance criterion."""
    def record(number, passed, detail, status=None):
        status = status or ("PASS" if passed else "FAIL")
        line = f"CRITERION {number}: {status} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
