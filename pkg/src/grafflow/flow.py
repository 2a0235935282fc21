"""Normalized gradient flow, discretized as backward Euler + renormalization.

One step solves ``(Id + dt([H] - [g(|psi|^2)])) phi = psi`` and rescales
``phi`` back to the prescribed mass.  All norms are the trapezoid
quadratures of :mod:`grafflow.discretization`, including vertex traces.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .discretization import (
    DiscreteLaplacian,
    Mesh,
    assemble_h,
    integrate,
    mass as quad_mass,
    node_norm,
)
from .errors import DivergedFlow, LinearSolveFailure, ZeroMass
from .graph import MetricGraph
from .linsolve import StructuredSystem, solve_linear
from .nonlinearity import Nonlinearity, cubic

log = logging.getLogger(__name__)

MASS_RTOL = 1e-12


@dataclass
class FlowConfig:
    mass: float
    dt: float = 1e-2
    eps: float = 1e-10
    max_iter: int = 10_000
    nonlinearity: Nonlinearity = field(default_factory=cubic)
    initial: object = None  # array, GraphFunction, callable(mesh) or per-edge gaussian mapping
    solver: str = "structured"  # or "sparse"

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if self.solver not in ("structured", "sparse"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass
class FlowHistory:
    iteration: np.ndarray
    energy: np.ndarray
    mass: np.ndarray
    mu: np.ndarray
    step_diff: np.ndarray

    def rows(self):
        return zip(self.iteration, self.energy, self.mass, self.mu, self.step_diff)


@dataclass
class FlowResult:
    field: np.ndarray
    iterations: int
    history: FlowHistory
    reason: str  # "converged" | "max_iter" | "solver_failure"
    operator: DiscreteLaplacian = field(repr=False)

    @property
    def energy(self) -> float:
        return float(self.history.energy[-1])

    @property
    def chemical_potential(self) -> float:
        return float(self.history.mu[-1])


# -- diagnostics ----------------------------------------------------------------


def discrete_energy(field, H: DiscreteLaplacian, nonlinearity: Nonlinearity, trace_map=None) -> float:
    """``1/2 <[H]u, u> - 1/2 int G(u^2)`` with the trapezoid quadrature."""
    tm = trace_map or H.trace_map
    u = np.asarray(field, dtype=float)
    t = tm.end_values(u)
    pot = integrate(nonlinearity.G(u * u), nonlinearity.G(t * t), tm)
    return 0.5 * H.inner(u) - 0.5 * pot


def chemical_potential(field, H: DiscreteLaplacian, nonlinearity: Nonlinearity) -> float:
    """Rayleigh quotient of ``[H] - g(u^2)`` in the node-weighted inner product.

    At a fixed point of the flow ``u`` is an eigenvector of that matrix, and
    this quotient returns its eigenvalue exactly.
    """
    u = np.asarray(field, dtype=float)
    w = H.mesh.node_dx
    m = float(np.dot(w, u * u))
    if m <= 0.0:
        raise ZeroMass("chemical potential of a zero field")
    return float(np.dot(w, u * (H @ u - nonlinearity.g(u * u) * u))) / m


def stationarity_residual(field, H: DiscreteLaplacian, nonlinearity: Nonlinearity) -> float:
    """Weighted norm of ``[H]u - g(u^2) u - mu u`` over interior nodes."""
    u = np.asarray(field, dtype=float)
    mu = chemical_potential(u, H, nonlinearity)
    r = H @ u - nonlinearity.g(u * u) * u - mu * u
    return node_norm(r, H.mesh)


# -- stepping -------------------------------------------------------------------


def renormalize(phi, m, trace_map) -> np.ndarray:
    cur = quad_mass(phi, trace_map)
    if not np.isfinite(cur):
        raise DivergedFlow("non-finite mass")
    if cur <= 0.0:
        raise ZeroMass("cannot renormalize a zero field")
    return phi * np.sqrt(m / cur)


def befd_step(field, H: DiscreteLaplacian, nonlinearity: Nonlinearity, dt: float, m: float,
              system: StructuredSystem | None = None) -> np.ndarray:
    """One backward-Euler step followed by renormalization to mass ``m``.

    Without ``system`` the matrix is assembled and solved by sparse LU.
    """
    psi = np.asarray(field, dtype=float)
    gvals = nonlinearity.g(psi * psi)
    if system is not None:
        try:
            phi = system.solve(gvals, psi)
        except LinearSolveFailure as exc:
            log.debug("structured solve failed (%s); falling back to sparse LU", exc)
            phi = solve_linear(system.matrix(gvals), psi, H.mesh.node_dx)
    else:
        M = sp.identity(psi.size, format="csr") + dt * (H.matrix - sp.diags(gvals))
        phi = solve_linear(M, psi, H.mesh.node_dx)
    if not np.all(np.isfinite(phi)):
        raise DivergedFlow("non-finite values after linear solve")
    return renormalize(phi, m, H.trace_map)


# -- initial data -----------------------------------------------------------------


def gaussian_profile(mesh: Mesh, edges: Mapping | None = None, default: Mapping | None = None) -> np.ndarray:
    """Per-edge ``sign * amplitude * exp(-rate (x - center)^2)``.

    ``x`` is the arclength from the edge's start vertex.  Edges missing from
    ``edges`` use ``default``; with no default they are zero.
    """
    out = np.zeros(mesh.n_total)
    edges = edges or {}
    for e in mesh.graph.edges:
        p = edges.get(e.id, default)
        if p is None:
            continue
        x = mesh.coordinates(e.id)
        if "constant" in p:
            vals = np.full(x.size, float(p["constant"]))
        else:
            vals = float(p.get("amplitude", 1.0)) * np.exp(
                -float(p.get("rate", 10.0)) * (x - float(p.get("center", 0.0))) ** 2)
        out[mesh.nodes(e.id)] = float(p.get("sign", 1.0)) * vals
    return out


def initial_field(mesh: Mesh, initial) -> np.ndarray:
    if initial is None:
        return gaussian_profile(mesh, default={})
    if callable(initial):
        return np.asarray(initial(mesh), dtype=float)
    if isinstance(initial, Mapping):
        return gaussian_profile(mesh, initial.get("edges"), initial.get("default"))
    arr = np.asarray(initial, dtype=float)
    if arr.shape != (mesh.n_total,):
        raise ValueError(f"initial datum has shape {arr.shape}, mesh needs ({mesh.n_total},)")
    return arr.copy()


# -- driver -------------------------------------------------------------------------


def run_flow(graph: MetricGraph, mesh: Mesh, config: FlowConfig, operator: DiscreteLaplacian | None = None,
             callback: Callable | None = None, raise_on_failure: bool = True) -> FlowResult:
    """Iterate :func:`befd_step` until the step difference drops below ``eps``."""
    H = operator if operator is not None else assemble_h(graph, mesh)
    tm = H.trace_map
    nl = config.nonlinearity
    m = float(config.mass)

    psi = initial_field(mesh, config.initial)
    if not np.any(psi):
        raise ZeroMass("initial datum is identically zero")
    psi = renormalize(psi, m, tm)
    system = StructuredSystem(H, config.dt) if config.solver == "structured" else None

    def diagnostics(u):
        t = tm.end_values(u)
        u2, t2 = u * u, t * t
        mm = integrate(u2, t2, tm)
        pot = integrate(nl.G(u2), nl.G(t2), tm)
        return 0.5 * H.inner(u) - 0.5 * pot, mm, chemical_potential(u, H, nl), t

    n_max = int(config.max_iter)
    energy = np.empty(n_max + 1)
    masses = np.empty(n_max + 1)
    mus = np.empty(n_max + 1)
    diffs = np.empty(n_max + 1)
    energy[0], masses[0], mus[0], t_old = diagnostics(psi)
    diffs[0] = np.nan

    reason, n = "max_iter", 0
    while n < n_max:
        try:
            new = befd_step(psi, H, nl, config.dt, m, system)
        except LinearSolveFailure:
            if raise_on_failure:
                raise
            reason = "solver_failure"
            break
        n += 1
        energy[n], masses[n], mus[n], t_new = diagnostics(new)
        d = new - psi
        dt_ = t_new - t_old
        diffs[n] = np.sqrt(max(integrate(d * d, dt_ * dt_, tm), 0.0))
        if not np.isfinite(energy[n]) or not np.isfinite(diffs[n]):
            raise DivergedFlow(f"non-finite diagnostics at iteration {n}")
        psi, t_old = new, t_new
        if callback is not None:
            callback(n, psi)
        if diffs[n] < config.eps:
            reason = "converged"
            break

    k = n + 1
    hist = FlowHistory(np.arange(k), energy[:k].copy(), masses[:k].copy(), mus[:k].copy(), diffs[:k].copy())
    log.info("flow stopped after %d iterations (%s), E=%.10g", n, reason, hist.energy[-1])
    return FlowResult(psi, n, hist, reason, H)
