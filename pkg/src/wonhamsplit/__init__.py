"""Multilevel splitting for switching diffusions, with sampled modes or the Wonham filter."""

from .engine import (CellSummary, ComparisonReport, CrudeResult, SplittingResult, crude_mc,
                     replicate, run_resampled, run_scheme, run_weighted, survivor_paths)
from .errors import ConfigError, NumericalError, UsageError
from .model import SwitchingModel, eval_drift_mixed, eval_drift_mode, eval_rates
from .simulate import (JOINT, MARGINAL, PathSegment, filter_step, project_simplex,
                       simulate_path, simulate_terminal, step_joint, step_marginal)
from .splitting import LevelSchedule, detect_hits, potential, segment_filter_update

__version__ = "0.1.0"

__all__ = [
    "CellSummary", "ComparisonReport", "ConfigError", "CrudeResult", "JOINT", "LevelSchedule",
    "MARGINAL", "NumericalError", "PathSegment", "SplittingResult", "SwitchingModel",
    "UsageError", "crude_mc", "detect_hits", "eval_drift_mixed", "eval_drift_mode",
    "eval_rates", "filter_step", "potential", "project_simplex", "replicate", "run_resampled",
    "run_scheme", "run_weighted", "segment_filter_update", "simulate_path",
    "simulate_terminal", "step_joint", "step_marginal", "survivor_paths",
]
