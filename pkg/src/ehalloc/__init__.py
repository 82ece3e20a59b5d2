"""Transmission energy allocation for energy-harvesting remote estimation.

A sensor with a finite, randomly recharged battery transmits measurements
over a fading packet-dropping channel and hears back through an erroneous,
erasure-prone acknowledgment link.  This package computes and evaluates
energy allocation policies that minimize the receiver's expected
estimation error covariance: belief-state dynamic programming, a cheaper
covariance-estimate recursion, battery-threshold policies for binary
energy levels, a stability test, and a seeded Monte Carlo harness.
"""

from ._kernels import USING_NUMBA
from .belief import Belief, CovGrid, belief_expected_cost, belief_update, compress
from .dp import (
    Policy,
    StateGrid,
    ValueTable,
    attach_belief_axis,
    bellman_backup_finite,
    build_grid,
    discretize_process,
    solve_average,
    solve_finite,
    solve_noncausal,
    table_to_csv,
)
from .errors import (
    BoundViolated,
    EhallocError,
    EmptyBelief,
    GridLookupOutOfRange,
    InfeasibleAction,
    NoConvergence,
    SchemaError,
    SingularInnovation,
    UnknownState,
    ZeroLikelihood,
)
from .harness import (
    ExperimentConfig,
    SimResult,
    TrajectoryRecord,
    compare_causal_noncausal,
    default_config,
    emit_csv,
    load_config,
    save_config,
    simulate,
    sweep,
)
from .model import (
    Battery,
    DropoutChannel,
    FeedbackChannel,
    PacketOutcome,
    StochProcessSpec,
    SystemModel,
    battery_step,
    packet_success_prob,
    riccati_step,
    rng_stream,
    sample_feedback,
    sample_process,
)
from .stability import StabilityReport, check_a2, empirical_bound_fit, minimal_rho
from .structural import (
    BinaryActionSet,
    GradientSchedule,
    ThresholdPolicy,
    clipped_policy_from_unconstrained,
    solve_threshold_average,
    threshold_search,
    verify_monotone_policy,
    verify_submodular,
)
from .subopt import CovEstimate, p_hat_expected_step, p_hat_step, solve_suboptimal_finite

__version__ = "0.1.0"
