"""Optimal liquidation across an exchange with linear price impact and a
Poisson-execution dark pool: value matrix ODE solver, feedback strategy,
trajectory simulation, Monte Carlo valuation, and property oracles."""

from .checkreport import CheckReport
from .errors import (
    ConfigError,
    DarkliqError,
    LadderExhaustedError,
    NumericFailureError,
    PenaltyTooSmallError,
    ValidationError,
)
from .market import (
    DerivedQuantities,
    MarketParams,
    ValidationResult,
    derive,
    two_asset_params,
    validate,
)
from .simulate import (
    JumpSchedule,
    McEstimate,
    Perturbation,
    Trajectory,
    draw_jumps,
    liquidation_check,
    monte_carlo_value,
    simulate,
)
from .strategy import StrategyAction, action, axis_optimality_gap
from .value import (
    BoundPair,
    GridSpec,
    LadderSpec,
    ValuePath,
    bounds_finite,
    bounds_limit,
    evaluate_C,
    principal_solution,
    single_asset_closed_form,
    single_asset_trajectory,
    solve_finite_penalty,
    value_at,
)

__version__ = "0.1.0"

__all__ = [
    "BoundPair", "CheckReport", "ConfigError", "DarkliqError",
    "DerivedQuantities", "GridSpec", "JumpSchedule", "LadderExhaustedError",
    "LadderSpec", "MarketParams", "McEstimate", "NumericFailureError",
    "PenaltyTooSmallError", "Perturbation", "StrategyAction", "Trajectory",
    "ValidationError", "ValidationResult", "ValuePath", "action",
    "axis_optimality_gap", "bounds_finite", "bounds_limit", "derive",
    "draw_jumps", "evaluate_C", "liquidation_check", "monte_carlo_value",
    "principal_solution", "simulate", "single_asset_closed_form",
    "single_asset_trajectory", "solve_finite_penalty", "two_asset_params",
    "validate", "value_at",
]
