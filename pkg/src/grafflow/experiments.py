"""Experiment specs, runs and on-disk artifacts.

A spec is a JSON object::

    {
      "name": "kirchhoff",
      "kind": "single_run" | "convergence_study" | "qualitative_checks",
      "graph": "graphs/two_star_kirchhoff.json"  or an inline graph object,
      "mesh": {"per_edge_counts": 800} | {"target_dx": 0.01} | {"total_points": 2500},
      "flow": {"mass": 2, "dt": 0.01, "eps": 1e-10, "max_iter": 1500,
               "nonlinearity": {...}, "initial": {...} | {"file": "field.csv"},
               "solver": "structured"},
      "reference": {"analytic": "kirchhoff_soliton", "m": 2} | {"field": "ref.csv"},
      "convergence": {"dx": [0.08, 0.04, 0.02, 0.01], "workers": 1},
      "checks": {"main_line": ["left", "right"], "junction": "J",
                 "localization_radius": 5, "decay_from": 10},
      "paper_scale": {... partial spec merged on request ...}
    }

Relative paths resolve against the spec file's directory.  Every run
writes into ``<out_root>/<name>/``, which is filled in a scratch directory
and moved into place only once all files are complete.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import analytic
from .discretization import Mesh, build_mesh, integrate, node_norm
from .errors import GrafflowError, SpecError, TopologyMismatch
from .flow import FlowConfig, FlowResult, run_flow
from .graph import MetricGraph, graph_from_dict, load_graph
from .nonlinearity import from_spec as nonlinearity_from_spec

log = logging.getLogger(__name__)

KINDS = ("single_run", "convergence_study", "qualitative_checks")
DEFAULT_OUT = "runs"
OUT_ENV = "GRAFFLOW_OUT"

FIELD_COLUMNS = ("edge", "k", "coordinate", "value")
HISTORY_COLUMNS = ("iteration", "energy", "mass", "mu", "step_diff")
ERROR_COLUMNS = ("edge", "k", "coordinate", "error")
CONVERGENCE_COLUMNS = ("dx", "n_total", "iterations", "linf_error", "local_order")


# -- spec -------------------------------------------------------------------------


@dataclass
class ExperimentSpec:
    name: str
    kind: str
    graph: MetricGraph
    mesh: dict
    flow: dict
    reference: dict | None = None
    dx_list: tuple | None = None
    workers: int = 1
    checks: dict | None = None
    base_dir: Path = field(default_factory=Path.cwd)
    raw: dict = field(default_factory=dict, repr=False)


def _merge(base: dict, patch: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in patch.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _resolve(base_dir: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base_dir / p


def spec_from_dict(data: Mapping, base_dir=None, paper_scale: bool = False,
                   overrides: Mapping | None = None) -> ExperimentSpec:
    """Validate a raw spec object; raises SpecError (or a graph error) on failure."""
    if not isinstance(data, Mapping):
        raise SpecError("spec must be a JSON object")
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    data = dict(data)
    if paper_scale:
        if "paper_scale" not in data:
            raise SpecError("--paper-scale requested but the spec has no 'paper_scale' block")
        data = _merge(data, data["paper_scale"])
    if overrides:
        data = _merge(data, {"flow": {k: v for k, v in overrides.items() if v is not None}})

    kind = data.get("kind", "single_run")
    if kind not in KINDS:
        raise SpecError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
    name = str(data.get("name") or "experiment")
    if not name or any(c in name for c in "/\\") or name.startswith("."):
        raise SpecError(f"invalid experiment name {name!r}")

    g = data.get("graph")
    if g is None:
        raise SpecError("spec needs a 'graph' (file path or inline object)")
    if isinstance(g, Mapping):
        graph = graph_from_dict(g)
    else:
        path = _resolve(base_dir, g)
        if not path.is_file():
            raise SpecError(f"graph file not found: {path}")
        graph = load_graph(path)

    flow = dict(data.get("flow") or {})
    reference = data.get("reference")
    if reference is not None:
        if not isinstance(reference, Mapping) or not ({"analytic", "field"} & set(reference)):
            raise SpecError("reference needs an 'analytic' descriptor or a 'field' file")
        if "field" in reference and not _resolve(base_dir, reference["field"]).is_file():
            raise SpecError(f"reference field file not found: {reference['field']}")
    if "mass" not in flow:
        if reference is None or "analytic" not in reference:
            raise SpecError("flow.mass is required without an analytic reference")
    elif not (isinstance(flow["mass"], (int, float)) and flow["mass"] > 0):
        raise SpecError(f"flow.mass must be a positive number, got {flow['mass']!r}")
    init = flow.get("initial")
    if isinstance(init, Mapping) and "file" in init and not _resolve(base_dir, init["file"]).is_file():
        raise SpecError(f"initial field file not found: {init['file']}")

    mesh = dict(data.get("mesh") or {})
    dx_list = None
    workers = 1
    if kind == "convergence_study":
        conv = data.get("convergence") or {}
        dx_list = tuple(float(x) for x in conv.get("dx", ()))
        if len(dx_list) < 3:
            raise SpecError("a convergence study needs at least 3 dx values")
        if any(b >= a for a, b in zip(dx_list, dx_list[1:])) or dx_list[-1] <= 0:
            raise SpecError("convergence dx values must be positive and strictly decreasing")
        if reference is None or "analytic" not in reference:
            raise SpecError("a convergence study needs an analytic reference")
        workers = int(conv.get("workers", 1))
        if workers < 1:
            raise SpecError("convergence.workers must be >= 1")
    else:
        keys = {"per_edge_counts", "target_dx", "total_points"} & set(mesh)
        if len(keys) != 1:
            raise SpecError("mesh needs exactly one of per_edge_counts, target_dx, total_points")

    checks = None
    if kind == "qualitative_checks":
        checks = dict(data.get("checks") or {})
        main = checks.get("main_line")
        if not main or "junction" not in checks:
            raise SpecError("qualitative checks need 'main_line' edges and a 'junction' vertex")
        ids = {e.id for e in graph.edges}
        missing = [e for e in main if e not in ids]
        if missing:
            raise SpecError(f"main_line edges not in graph: {missing}")
        for eid in main:
            e = graph.edge(eid)
            if checks["junction"] not in (e.start, e.end):
                raise SpecError(f"main_line edge {eid!r} does not touch the junction")

    spec = ExperimentSpec(name, kind, graph, mesh, flow, dict(reference) if reference else None,
                          dx_list, workers, checks, base_dir, data)
    _ = flow_config(spec, None)  # validates flow fields early
    return spec


def load_spec(path, paper_scale: bool = False, overrides: Mapping | None = None) -> ExperimentSpec:
    path = Path(path)
    if not path.is_file():
        raise SpecError(f"spec file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})") from None
    return spec_from_dict(data, path.parent, paper_scale, overrides)


# -- building blocks -------------------------------------------------------------------


def reference_state(ref: Mapping) -> analytic.AnalyticState:
    kind = ref["analytic"]
    if kind == "kirchhoff_soliton":
        return analytic.kirchhoff_soliton(float(ref["m"]))
    if kind == "delta":
        return analytic.delta_ground_state(float(ref["omega"]), float(ref["alpha"]))
    if kind in ("delta_prime_sym", "delta_prime_asym"):
        states = analytic.delta_prime_states(float(ref["omega"]), float(ref["beta"]))
        found = [s for s in states if s.descriptor == kind]
        if not found:
            raise SpecError(f"no {kind} state for omega={ref['omega']}, beta={ref['beta']}")
        return found[0]
    raise SpecError(f"unknown analytic reference {kind!r}")


def spec_mass(spec: ExperimentSpec) -> float:
    if "mass" in spec.flow:
        return float(spec.flow["mass"])
    return reference_state(spec.reference).mass


def make_mesh(spec: ExperimentSpec, dx: float | None = None) -> Mesh:
    if dx is not None:
        return build_mesh(spec.graph, target_dx=dx)
    m = spec.mesh
    if "per_edge_counts" in m:
        return build_mesh(spec.graph, per_edge_counts=m["per_edge_counts"])
    if "target_dx" in m:
        return build_mesh(spec.graph, target_dx=float(m["target_dx"]))
    return build_mesh(spec.graph, total_points=int(m["total_points"]))


def flow_config(spec: ExperimentSpec, mesh: Mesh | None) -> FlowConfig:
    f = spec.flow
    init = f.get("initial")
    if isinstance(init, Mapping) and "file" in init:
        path = _resolve(spec.base_dir, init["file"])
        init = (lambda msh: read_field_csv(path, msh)) if mesh is None else read_field_csv(path, mesh)
    try:
        return FlowConfig(
            mass=spec_mass(spec),
            dt=float(f.get("dt", 1e-2)),
            eps=float(f.get("eps", 1e-10)),
            max_iter=int(f.get("max_iter", 10_000)),
            nonlinearity=nonlinearity_from_spec(f.get("nonlinearity")),
            initial=init,
            solver=f.get("solver", "structured"),
        )
    except (ValueError, TypeError) as exc:
        raise SpecError(f"invalid flow settings: {exc}") from None


def field_coordinates(mesh: Mesh) -> np.ndarray:
    """Signed line coordinate on a two-edge star, arclength from the edge start otherwise."""
    try:
        return analytic.signed_coordinates(mesh)
    except TopologyMismatch:
        return np.concatenate([mesh.coordinates(e.id) for e in mesh.graph.edges])


def node_labels(mesh: Mesh):
    for e in mesh.graph.edges:
        for k in range(mesh.counts[e.id]):
            yield e.id, k + 1


def compare_with_state(field, state: analytic.AnalyticState, graph, mesh):
    """Pointwise error against the closest symmetry image of ``state``.

    Real ground states are determined up to sign; delta-prime states also up
    to the edge swap.  Returns ``(error_array, image)``.
    """
    images = [state]
    if state.descriptor.startswith("delta_prime"):
        images.append(state.mirrored())
    u = np.asarray(field, dtype=float)
    best = None
    for img in images:
        ref = np.asarray(analytic.sample_on_mesh(img, graph, mesh))
        for s in (1.0, -1.0):
            err = np.abs(u - s * ref)
            if best is None or err.max() < best[0].max():
                best = (err, img)
    return best


# -- CSV i/o -----------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def write_field_csv(path, field, mesh: Mesh) -> None:
    coords = field_coordinates(mesh)
    vals = np.asarray(field, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(FIELD_COLUMNS)
        for i, (eid, k) in enumerate(node_labels(mesh)):
            w.writerow((eid, k, _fmt(coords[i]), _fmt(vals[i])))


def read_field_csv(path, mesh: Mesh) -> np.ndarray:
    """Load a field CSV written by :func:`write_field_csv` onto ``mesh``."""
    index = {lab: i for i, lab in enumerate(node_labels(mesh))}
    out = np.full(mesh.n_total, np.nan)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"edge", "k", "value"} <= set(reader.fieldnames):
            raise SpecError(f"{path}: field CSV needs columns edge, k, value")
        for row in reader:
            key = (row["edge"], int(row["k"]))
            if key not in index:
                raise SpecError(f"{path}: node {key} does not exist on this mesh")
            out[index[key]] = float(row["value"])
    if np.isnan(out).any():
        raise SpecError(f"{path}: {int(np.isnan(out).sum())} mesh nodes missing from the file")
    return out


def write_history_csv(path, history) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for it, e, m, mu, d in history.rows():
            w.writerow((int(it), _fmt(e), _fmt(m), _fmt(mu), "" if math.isnan(d) else _fmt(d)))


def write_error_csv(path, err, mesh: Mesh) -> None:
    coords = field_coordinates(mesh)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ERROR_COLUMNS)
        for i, (eid, k) in enumerate(node_labels(mesh)):
            w.writerow((eid, k, _fmt(coords[i]), _fmt(err[i])))


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class _Staging:
    """Scratch directory that replaces ``target`` on success and vanishes on error."""

    def __init__(self, target: Path):
        self.target = Path(target)

    def __enter__(self) -> Path:
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.target.name}-", dir=self.target.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        old = None
        if self.target.exists():
            old = self.target.with_name(f".{self.target.name}-old-{os.getpid()}")
            os.replace(self.target, old)
        os.replace(self.tmp, self.target)
        if old is not None:
            shutil.rmtree(old, ignore_errors=True)
        return False


def output_root(out_root=None) -> Path:
    return Path(out_root or os.environ.get(OUT_ENV) or DEFAULT_OUT)


# -- experiments ---------------------------------------------------------------------------


@dataclass
class RunOutcome:
    summary: dict
    directory: Path
    result: FlowResult = field(repr=False)


def _run(spec: ExperimentSpec, mesh: Mesh) -> tuple[FlowResult, float]:
    cfg = flow_config(spec, mesh)
    t0 = time.perf_counter()
    res = run_flow(spec.graph, mesh, cfg)
    return res, time.perf_counter() - t0


def _base_summary(spec, mesh, res: FlowResult, elapsed) -> dict:
    cfg = spec.flow
    return {
        "name": spec.name,
        "kind": spec.kind,
        "iterations": int(res.iterations),
        "termination": res.reason,
        "energy": float(res.energy),
        "mass": float(res.history.mass[-1]),
        "chemical_potential": float(res.chemical_potential),
        "final_step_diff": None if res.iterations == 0 else float(res.history.step_diff[-1]),
        "n_total": int(mesh.n_total),
        "max_dx": float(mesh.max_dx),
        "dt": float(cfg.get("dt", 1e-2)),
        "eps": float(cfg.get("eps", 1e-10)),
        "elapsed_seconds": round(elapsed, 3),
    }


def _reference_errors(spec, mesh, res):
    """Error array and summary entries, or ``(None, {})`` without a reference."""
    ref = spec.reference
    if ref is None:
        return None, {}
    if "analytic" in ref:
        state = reference_state(ref)
        err, img = compare_with_state(res.field, state, spec.graph, mesh)
        extra = {"reference": img.descriptor, "reference_energy": state.energy,
                 "reference_mass": state.mass, "reference_omega": state.omega,
                 "energy_error": abs(res.energy - state.energy)}
    else:
        refv = read_field_csv(_resolve(spec.base_dir, ref["field"]), mesh)
        err = np.abs(res.field - refv)
        extra = {"reference": str(ref["field"])}
    extra["linf_error"] = float(err.max())
    extra["l2_error"] = node_norm(err, mesh)
    return err, extra


def run_experiment(spec: ExperimentSpec, out_root=None, dump_matrix: bool = False) -> RunOutcome:
    """Single flow run; writes field.csv, history.csv, [error.csv], summary.json."""
    mesh = make_mesh(spec)
    res, elapsed = _run(spec, mesh)
    err, extra = _reference_errors(spec, mesh, res)
    summary = _base_summary(spec, mesh, res, elapsed) | extra
    target = output_root(out_root) / spec.name
    with _Staging(target) as tmp:
        write_field_csv(tmp / "field.csv", res.field, mesh)
        write_history_csv(tmp / "history.csv", res.history)
        if err is not None:
            write_error_csv(tmp / "error.csv", err, mesh)
        if dump_matrix:
            from .discretization import dump_coo
            dump_coo(res.operator, tmp / "H.coo")
        _write_json(tmp / "summary.json", summary)
    return RunOutcome(summary, target, res)


@dataclass
class ConvergenceTable:
    dx: np.ndarray
    errors: np.ndarray
    local_orders: np.ndarray  # nan for the first row
    slope: float
    iterations: list
    n_total: list
    directory: Path | None = None


def fitted_slope(dx, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(dx)``."""
    return float(np.polyfit(np.log(np.asarray(dx, float)), np.log(np.asarray(errors, float)), 1)[0])


def convergence_study(spec: ExperimentSpec, out_root=None) -> ConvergenceTable:
    if spec.dx_list is None:
        raise SpecError("spec is not a convergence study")
    state = reference_state(spec.reference)

    def one(dx):
        mesh = make_mesh(spec, dx)
        res, _ = _run(spec, mesh)
        err, _img = compare_with_state(res.field, state, spec.graph, mesh)
        return float(mesh.max_dx), float(err.max()), res.iterations, mesh.n_total

    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as pool:
            rows = list(pool.map(one, spec.dx_list))
    else:
        rows = [one(dx) for dx in spec.dx_list]
    dx = np.array([r[0] for r in rows])
    errors = np.array([r[1] for r in rows])
    local = np.full(dx.size, np.nan)
    local[1:] = np.log(errors[1:] / errors[:-1]) / np.log(dx[1:] / dx[:-1])
    table = ConvergenceTable(dx, errors, local, fitted_slope(dx, errors),
                             [int(r[2]) for r in rows], [int(r[3]) for r in rows])

    target = output_root(out_root) / spec.name
    with _Staging(target) as tmp:
        with open(tmp / "convergence.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CONVERGENCE_COLUMNS)
            for i in range(dx.size):
                w.writerow((_fmt(dx[i]), table.n_total[i], table.iterations[i], _fmt(errors[i]),
                            "" if np.isnan(local[i]) else _fmt(local[i])))
        _write_json(tmp / "summary.json", {
            "name": spec.name, "kind": spec.kind, "reference": state.descriptor,
            "dx": dx.tolist(), "linf_error": errors.tolist(), "iterations": table.iterations,
            "fitted_slope": table.slope,
        })
    table.directory = target
    return table


@dataclass
class CheckReport:
    passed: bool
    localization: dict
    monotone_decay: dict
    summary: dict
    directory: Path | None = None
    field: np.ndarray | None = field(default=None, repr=False)


def _main_line_distances(mesh: Mesh, edge_id, junction) -> np.ndarray:
    e = mesh.graph.edge(edge_id)
    x = mesh.coordinates(edge_id)
    return x if e.start == junction else e.length - x


def evaluate_checks(field, mesh: Mesh, checks: Mapping) -> tuple[dict, dict]:
    """Localization and monotone-decay verdicts for a field on a graph with a main line.

    Localization: the node maximizing ``|u|`` is off the main line, or on it
    within ``localization_radius`` of the junction.  Decay: along every
    main-line edge, ``|u|`` strictly decreases node to node beyond
    ``decay_from``.
    """
    u = np.abs(np.asarray(field, dtype=float))
    junction = checks["junction"]
    radius = float(checks.get("localization_radius", 5.0))
    start = float(checks.get("decay_from", 10.0))
    main = list(checks["main_line"])

    i = int(np.argmax(u))
    eid = mesh.graph.edges[int(mesh.edge_of_node[i])].id
    on_main = eid in main
    where = {"edge": eid, "k": int(i - mesh.offsets[eid] + 1), "value": float(u[i])}
    if on_main:
        d = float(_main_line_distances(mesh, eid, junction)[i - mesh.offsets[eid]])
        where["distance_from_junction"] = d
        ok = d <= radius
    else:
        ok = True
    loc = {"passed": bool(ok), "argmax": where, "radius": radius}

    violations = []
    for eid in main:
        d = _main_line_distances(mesh, eid, junction)
        vals = u[mesh.nodes(eid)]
        order = np.argsort(d)
        d, vals = d[order], vals[order]
        sel = d > start
        dd, vv = d[sel], vals[sel]
        bad = np.nonzero(vv[1:] >= vv[:-1])[0]
        violations += [{"edge": eid, "distance": float(dd[j + 1]), "value": float(vv[j + 1]),
                        "previous": float(vv[j])} for j in bad[:20]]
    dec = {"passed": not violations, "decay_from": start, "violations": violations}
    return loc, dec


def qualitative_checks(spec: ExperimentSpec, out_root=None) -> CheckReport:
    if spec.checks is None:
        raise SpecError("spec has no 'checks' block")
    mesh = make_mesh(spec)
    res, elapsed = _run(spec, mesh)
    loc, dec = evaluate_checks(res.field, mesh, spec.checks)
    summary = _base_summary(spec, mesh, res, elapsed)
    summary["checks"] = {"localization": loc, "monotone_decay": dec}
    summary["passed"] = bool(loc["passed"] and dec["passed"])
    target = output_root(out_root) / spec.name
    with _Staging(target) as tmp:
        write_field_csv(tmp / "field.csv", res.field, mesh)
        write_history_csv(tmp / "history.csv", res.history)
        _write_json(tmp / "summary.json", summary)
    return CheckReport(summary["passed"], loc, dec, summary, target, res.field)


def execute(spec: ExperimentSpec, out_root=None, dump_matrix: bool = False):
    """Dispatch on ``spec.kind``."""
    if spec.kind == "single_run":
        return run_experiment(spec, out_root, dump_matrix)
    if spec.kind == "convergence_study":
        return convergence_study(spec, out_root)
    return qualitative_checks(spec, out_root)


__all__ = [
    "ExperimentSpec", "GrafflowError", "load_spec", "spec_from_dict", "run_experiment",
    "convergence_study", "qualitative_checks", "execute", "evaluate_checks", "fitted_slope",
    "read_field_csv", "write_field_csv", "compare_with_state", "reference_state",
]
