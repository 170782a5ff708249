"""On-off traffic shaping: delay model, simulator, convexity checks, fair allocation and trace tools."""
from .exceptions import (
    DegenerateInputError,
    DomainError,
    InfeasibleProblemError,
    NonDifferentiableError,
    StabilityError,
    StraddleError,
)
from .model import (
    ShaperDerived,
    ShaperParams,
    derive,
    dummy_rate,
    mean_waiting_time,
    mean_waiting_time_relaxed,
    miller_queue_estimate,
    quantize_schedule,
    stability_check,
    waiting_time_pd,
)
from .simulation import QueueStats, SimConfig, output_pattern, run_fctl, simulate
from .convexity import CurvatureReport, finite_difference_hessian, scan_convexity, second_derivatives
from .allocator import (
    AllocationResult,
    FlowSpec,
    Multipliers,
    ProportionalFairAllocator,
    SolverOptions,
    brute_force_small,
    check_feasible,
    evaluate_objective,
    read_scenario,
    solve_allocation,
    subgradient_step_d,
    subgradient_step_p,
)
from .traces import (
    OnOffShaper,
    PacketTrace,
    ShapeReport,
    TraceSlotter,
    corpus_report,
    dtw_distance,
    read_trace_csv,
    shape_trace,
    slot_trace,
    synthetic_corpus,
)

__version__ = "0.1.0"
