"""Experiment harness: configuration, runs, tables, figures and checks."""

from .checks import CheckResult, check_suite
from .config import ExperimentConfig, parse_config_file, resolve_config
from .experiments import reproduce_table, run_experiment, run_figure
from .records import IterationRecord, emit_csv, emit_svg_decay_plot, geometric_mean_rate

__all__ = [
    "CheckResult",
    "check_suite",
    "ExperimentConfig",
    "parse_config_file",
    "resolve_config",
    "reproduce_table",
    "run_experiment",
    "run_figure",
    "IterationRecord",
    "emit_csv",
    "emit_svg_decay_plot",
    "geometric_mean_rate",
]
