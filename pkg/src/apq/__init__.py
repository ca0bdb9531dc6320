"""Accumulating-priority M/G/1 queue games.

Waiting-time analytics for linear accumulating priorities, Nash equilibria
of the slope-bidding game, welfare comparisons against the absolute
priority optimum, and a discrete-event simulation oracle validating all of
it. See the README for the `apq` command line.
"""
__version__ = "0.1.0"

from .model import (
    ClassSpec,
    ConfigError,
    InvalidClassError,
    InvalidMixtureError,
    Model,
    NonPositiveBidError,
    ServiceSpec,
    UnstableError,
    build_model,
    load_model,
    model_from_dict,
    model_from_json,
    model_to_dict,
    scale_to_rho,
)
from .analytics import (
    conservation_residual,
    tagged_waiting,
    tagged_waiting_derivative,
    tagged_waiting_mixed,
    waiting_times,
)
from .equilibrium import (
    BestResponseReport,
    EquilibriumResult,
    HeterogeneousCostsError,
    InvalidBracketError,
    NoConvergenceError,
    UnorderedProfileError,
    class_best_response,
    homogeneous_best_response,
    homogeneous_equilibrium,
    individual_best_response,
    solve_heterogeneous,
    w_tilde,
)
from .simulator import (
    ClassStats,
    EmptyQueueError,
    InvalidConfigError,
    SimConfig,
    SimStats,
    TaggedProbe,
    WaitingCustomer,
    backend_name,
    next_in_queue,
    overtaking_demo,
    simulate,
)
from .welfare import (
    InvalidScaleError,
    WelfareReport,
    absolute_priority_waits,
    cmu_order,
    pricing_total_costs,
    pricing_transform,
    scaled_bids,
    social_cost,
    welfare_report,
)
