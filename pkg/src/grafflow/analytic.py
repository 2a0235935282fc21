"""Explicit ground states of the focusing cubic NLS on the two-edge star.

Profiles are functions of the distance ``d >= 0`` from the central vertex.
Edge 1 is the first edge of the graph; in signed (line) coordinates it
occupies ``x <= 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .discretization import GraphFunction, Mesh
from .errors import FrequencyTooSmall, InvalidParameter, NonpositiveMass, RootFindFailure, TopologyMismatch
from .graph import START, MetricGraph


def _sech(x):
    return 1.0 / np.cosh(x)


@dataclass(frozen=True)
class AnalyticState:
    descriptor: str
    omega: float
    mass: float
    energy: float
    profiles: tuple[Callable, Callable] = field(repr=False)
    params: dict = field(default_factory=dict)

    def __call__(self, edge: int, d):
        return self.profiles[edge](np.asarray(d, dtype=float))

    def on_line(self, x):
        """Profile in signed coordinates (edge 1 at ``x <= 0``)."""
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, self.profiles[0](np.abs(x)), self.profiles[1](np.abs(x)))

    def mirrored(self) -> "AnalyticState":
        """Image under the edge swap ``(u1, u2) -> (-u2, -u1)``.

        This maps delta-prime states to states of the same problem.
        """
        p1, p2 = self.profiles
        return AnalyticState(self.descriptor + "_mirrored", self.omega, self.mass, self.energy,
                             (lambda d: -p2(d), lambda d: -p1(d)), dict(self.params))


def kirchhoff_soliton(m: float) -> AnalyticState:
    if not m > 0:
        raise NonpositiveMass(f"mass must be positive, got {m}")
    amp, k = m / (2.0 * math.sqrt(2.0)), m / 4.0
    prof = lambda d: amp * _sech(k * d)
    return AnalyticState("kirchhoff_soliton", m * m / 16.0, float(m), -m ** 3 / 96.0,
                         (prof, prof), {"m": m})


def delta_ground_state(omega: float, alpha: float) -> AnalyticState:
    if not alpha < 0:
        raise InvalidParameter("explicit delta ground states need an attractive vertex (alpha < 0)")
    if not omega > 0:
        raise FrequencyTooSmall(f"omega must be positive, got {omega}")
    s = math.sqrt(omega)
    arg = abs(alpha) / (2.0 * s)
    if arg >= 1.0:
        raise FrequencyTooSmall(f"|alpha|/(2 sqrt(omega)) = {arg:.6g} >= 1")
    a = math.atanh(arg) / s
    shift = math.copysign(1.0, alpha) * a
    amp = math.sqrt(2.0 * omega)
    prof = lambda d: amp * _sech(s * (d - shift))
    mass = 4.0 * s + 2.0 * alpha
    energy = -2.0 / 3.0 * omega ** 1.5 - alpha ** 3 / 12.0
    return AnalyticState("delta", omega, mass, energy, (prof, prof), {"omega": omega, "alpha": alpha, "a": a})


# -- delta prime ------------------------------------------------------------------


def transcendental_residuals(x_minus: float, x_plus: float, omega: float, beta: float) -> tuple[float, float]:
    s = math.sqrt(omega)
    yp, ym = s * x_plus, s * x_minus
    r1 = math.tanh(yp) / math.cosh(yp) + math.tanh(ym) / math.cosh(ym)
    r2 = 1.0 / math.cosh(yp) + 1.0 / math.cosh(ym) - beta * s * math.tanh(yp) / math.cosh(yp)
    return r1, r2


def _h(y):
    return math.tanh(y) / math.cosh(y)


def _far_branch(y_plus):
    """``y > asinh(1)`` with ``h(y) = h(y_plus)``; ``h(y) = u/(1+u^2)``, ``u = sinh y``."""
    c = _h(y_plus)
    disc = math.sqrt(max(1.0 - 4.0 * c * c, 0.0))
    return math.asinh((1.0 + disc) / (2.0 * c))


def solve_transcendental(omega: float, beta: float, tol: float = 1e-15) -> tuple[float, float]:
    """Asymmetric root ``(x_-, x_+)`` for ``omega > 8/beta^2``."""
    s = math.sqrt(omega)
    if omega <= 8.0 / beta ** 2:
        raise FrequencyTooSmall("asymmetric states need omega > 8/beta^2")
    ybar = math.atanh(2.0 / (beta * s))

    def f(yp):
        return 1.0 / math.cosh(yp) + 1.0 / math.cosh(_far_branch(yp)) - beta * s * _h(yp)

    lo, hi = 0.0, ybar
    flo = 1.0  # limit of f at 0+
    if not (f(hi) < 0.0):
        raise RootFindFailure("no sign change on (0, x_bar)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            lo = hi = mid
            break
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= tol * max(hi, 1.0):
            break
    yp = 0.5 * (lo + hi)
    ym = -_far_branch(yp)

    # Newton polish on the full 2x2 system in scaled variables
    for _ in range(4):
        r = np.array(transcendental_residuals(ym / s, yp / s, omega, beta))
        if np.abs(r).max() < 1e-15:
            break
        dh = lambda y: (1.0 - 2.0 * math.tanh(y) ** 2) / math.cosh(y)  # h'(y)
        dsech = lambda y: -math.tanh(y) / math.cosh(y)
        J = np.array([[dh(ym), dh(yp)],
                      [dsech(ym), dsech(yp) - beta * s * dh(yp)]])
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            break
        ym, yp = ym + step[0], yp + step[1]
    x_minus, x_plus = ym / s, yp / s
    if not (x_minus < 0.0 < x_plus < abs(x_minus)):
        raise RootFindFailure(f"root ({x_minus}, {x_plus}) violates x_- < 0 < x_+ < |x_-|")
    if max(map(abs, transcendental_residuals(x_minus, x_plus, omega, beta))) > 1e-12:
        raise RootFindFailure("transcendental residual above 1e-12")
    return x_minus, x_plus


def _delta_prime_state(omega, beta, x_minus, x_plus, descriptor, mass, energy):
    s = math.sqrt(omega)
    amp = math.sqrt(2.0 * omega)
    p1 = lambda d: -amp * _sech(s * (d - x_minus))
    p2 = lambda d: amp * _sech(s * (d + x_plus))
    params = {"omega": omega, "beta": beta, "x_minus": x_minus, "x_plus": x_plus}
    return AnalyticState(descriptor, omega, mass, energy, (p1, p2), params)


def delta_prime_states(omega: float, beta: float) -> list[AnalyticState]:
    """Symmetric (odd) state, plus the asymmetric one when ``omega > 8/beta^2``."""
    if not beta > 0:
        raise InvalidParameter("explicit delta-prime states need beta > 0")
    if omega <= 4.0 / beta ** 2:
        raise FrequencyTooSmall(f"omega={omega} <= 4/beta^2={4.0 / beta ** 2}")
    s = math.sqrt(omega)
    xbar = math.atanh(2.0 / (beta * s)) / s
    sym = _delta_prime_state(
        omega, beta, -xbar, xbar, "delta_prime_sym",
        4.0 * s - 8.0 / beta, 2.0 / 3.0 * (8.0 / beta ** 3 - omega ** 1.5),
    )
    states = [sym]
    if omega > 8.0 / beta ** 2:
        xm, xp = solve_transcendental(omega, beta)
        tm, tp = math.tanh(s * xm), math.tanh(s * xp)
        mass = 2.0 * s * (2.0 + tm - tp)
        energy = (omega ** 1.5 / 3.0 * (-2.0 - 3.0 * (tm - tp) + 2.0 * (tm ** 3 - tp ** 3))
                  - omega / beta * (1.0 / math.cosh(s * xm) + 1.0 / math.cosh(s * xp)) ** 2)
        states.append(_delta_prime_state(omega, beta, xm, xp, "delta_prime_asym", mass, energy))
    return states


# -- sampling ---------------------------------------------------------------------


def star_center(graph: MetricGraph):
    """Central vertex of a two-edge star; raises TopologyMismatch otherwise."""
    if len(graph.edges) != 2:
        raise TopologyMismatch(f"expected a two-edge star, got {len(graph.edges)} edges")
    e1, e2 = graph.edges
    if e1.is_loop or e2.is_loop:
        raise TopologyMismatch("loops are not allowed in a two-edge star")
    common = {e1.start, e1.end} & {e2.start, e2.end}
    if len(common) != 1:
        raise TopologyMismatch("the two edges must share exactly one vertex")
    return common.pop()


def distance_from_center(mesh: Mesh, edge_id, center) -> np.ndarray:
    e = mesh.graph.edge(edge_id)
    x = mesh.coordinates(edge_id)
    return x if e.start == center else e.length - x


def signed_coordinates(mesh: Mesh) -> np.ndarray:
    """Line coordinate of every node of a two-edge star (edge 1 negative)."""
    center = star_center(mesh.graph)
    out = np.empty(mesh.n_total)
    for sign, e in zip((-1.0, 1.0), mesh.graph.edges):
        out[mesh.nodes(e.id)] = sign * distance_from_center(mesh, e.id, center)
    return out


def sample_on_mesh(state: AnalyticState, graph: MetricGraph, mesh: Mesh) -> GraphFunction:
    center = star_center(graph)
    vals = np.empty(mesh.n_total)
    for i, e in enumerate(graph.edges):
        vals[mesh.nodes(e.id)] = state(i, distance_from_center(mesh, e.id, center))
    return GraphFunction(vals, mesh)


def sample_traces(state: AnalyticState, graph: MetricGraph) -> np.ndarray:
    """Exact edge-end values in the layout of ``TraceMap.end_values``."""
    center = star_center(graph)
    out = np.empty(4)
    for i, e in enumerate(graph.edges):
        for j, tag in enumerate((START, "end")):
            at = e.start if tag == START else e.end
            d = 0.0 if at == center else e.length
            out[2 * i + j] = state(i, d)
    return out
