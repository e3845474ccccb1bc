"""Activity and battery scheduling against net-load forecasts.

Parse scheduling instances, evaluate the quadratic energy + peak cost of a
monthly schedule, build schedules heuristically under five battery policies,
and quantify/correct the asymmetric cost of forecast errors.
"""

from .instance import (Battery, Building, Instance, InstanceFormatError,
                       OnceOffActivity, RecurringActivity, SolarMapping,
                       Violation, parse_instance, serialize_instance,
                       validate_instance)
from .series import (Calendar, NetLoadSeries, PriceSeries, RawSeries,
                     SeriesFormatError, descriptive_stats, expand_prices,
                     load_price_csv, load_series_csv, net_load,
                     working_period_mask, working_periods)
from .metrics import (ErrorReport, bias_decomposition, error_report, mae,
                      mase, pearson, residual_moments)
from .evaluator import (ACTION_CODES, BatteryAction, InfeasibleScheduleError,
                        Placement, Schedule, Slot, activity_load_profile,
                        battery_profile, check_feasibility, empty_schedule,
                        profile_cost, schedule_from_json, schedule_to_json,
                        simulate_batteries, total_cost, total_load)
from .policies import BatteryPolicy, policy_check
from .scheduler import (InfeasibleInstanceError, OptimizerConfig,
                        conservative_warm_starts, dispatch_battery_exact,
                        dispatch_battery_heuristic, evaluate_against_actual,
                        optimize)
from .correction import (CostModelParams, LinearCorrection, PerturbationSpec,
                         apply_correction, fit_correction_run,
                         fit_gamma_epsilon, linear_correction, perturb,
                         u_cost, v_cost)

__version__ = "0.1.0"

__all__ = [
    "Battery", "Building", "Instance", "InstanceFormatError",
    "OnceOffActivity", "RecurringActivity", "SolarMapping", "Violation",
    "parse_instance", "serialize_instance", "validate_instance",
    "Calendar", "NetLoadSeries", "PriceSeries", "RawSeries",
    "SeriesFormatError", "descriptive_stats", "expand_prices",
    "load_price_csv", "load_series_csv", "net_load",
    "working_period_mask", "working_periods",
    "ErrorReport", "bias_decomposition", "error_report", "mae", "mase",
    "pearson", "residual_moments",
    "ACTION_CODES", "BatteryAction", "InfeasibleScheduleError", "Placement",
    "Schedule",
    "Slot", "activity_load_profile", "battery_profile", "check_feasibility",
    "empty_schedule", "profile_cost", "schedule_from_json",
    "schedule_to_json", "simulate_batteries", "total_cost", "total_load",
    "BatteryPolicy", "policy_check",
    "InfeasibleInstanceError", "OptimizerConfig", "conservative_warm_starts",
    "dispatch_battery_exact", "dispatch_battery_heuristic",
    "evaluate_against_actual", "optimize",
    "CostModelParams", "LinearCorrection", "PerturbationSpec",
    "apply_correction", "fit_correction_run", "fit_gamma_epsilon",
    "linear_correction", "perturb", "u_cost", "v_cost",
    "__version__",
]
