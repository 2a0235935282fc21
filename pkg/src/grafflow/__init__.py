"""Stationary states of nonlinear Schroedinger equations on metric graphs."""
from .analytic import (
    AnalyticState,
    delta_ground_state,
    delta_prime_states,
    kirchhoff_soliton,
    sample_on_mesh,
    solve_transcendental,
)
from .discretization import (
    DiscreteLaplacian,
    GraphFunction,
    Mesh,
    TraceMap,
    assemble_h,
    build_mesh,
    build_trace_map,
    reconstruct_traces,
    trace_coefficients,
    weighted_norms,
)
from .experiments import (
    ExperimentSpec,
    convergence_study,
    load_spec,
    qualitative_checks,
    run_experiment,
)
from .flow import (
    FlowConfig,
    FlowResult,
    befd_step,
    chemical_potential,
    discrete_energy,
    run_flow,
)
from .graph import (
    MetricGraph,
    VertexCondition,
    build_graph,
    delta_condition,
    delta_prime_condition,
    dipole_condition,
    dirichlet_condition,
    kirchhoff_condition,
    load_graph,
    validate_condition,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .linsolve import StructuredSystem, solve_linear
from .nonlinearity import Nonlinearity, cubic, power

__version__ = "0.1.0"
