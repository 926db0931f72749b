"""Distributed adaptive consensus control with prescribed-performance
funnels for networks of high-order unknown-nonlinear agents."""

from . import errors
from .controller import (
    ControllerParams,
    FilterContext,
    GainCheckInputs,
    GainReport,
    adaptive_update,
    companion_matrix,
    control_input,
    gain_check,
    lambda_bar_from_root,
    lyapunov_diagnostic,
    metric_error,
    solve_lyapunov,
)
from .dynamics import (
    AgentModel,
    LeaderModel,
    eval_agent_field,
    example1_suite,
    example2_suite,
    sync_error,
    sync_error_kron,
)
from .graph import (
    DirectedGraph,
    GraphQuantities,
    build_graph,
    default_five_ring,
    disagreement_bound,
    laplacian_quantities,
    min_singular_value,
    validate_connectivity,
)
from .ppf import (
    PpfParams,
    SignBranch,
    TransformedErrors,
    epsilon_chain,
    inverse_transform,
    ppf_derivative,
    ppf_value,
    r_factor,
    transform_error,
)
from .sim import (
    ScenarioConfig,
    SimState,
    SummaryReport,
    TraceRecord,
    assemble_closed_loop,
    rk4_step,
    run_scenario,
    summarize,
)

__version__ = "0.1.0"
