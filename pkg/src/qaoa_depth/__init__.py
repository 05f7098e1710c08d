"""Automatic control-depth selection for QAOA via L1-regularized proximal gradient."""

from .maxcut import (
    SpectrumSummary,
    WeightedGraph,
    approximation_ratio,
    brute_force_extrema,
    diagonal_energies,
    load_builtin,
    load_instance,
)
from .optimizer import (
    Algorithm,
    EnergyEvaluator,
    OptimizerConfig,
    RunResult,
    apg_run,
    exact_gradient,
    grad_central_difference,
    lambda_sweep,
    pg_run,
    refine_fixed_support,
)
from .schedule import ControlSchedule, active_depth, control_op_count, l1_length, soft_threshold
from .statevector import DiagonalObservable, QubitState, evolve, expectation, plus_state

__version__ = "0.1.0"
