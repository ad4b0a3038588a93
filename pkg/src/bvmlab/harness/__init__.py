"""Experiment orchestration: configuration, replicated runs and CSV reports."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config, quarter_power_p
from .experiment import REPORT_COLUMNS, ConvergenceReport, run_experiment
from .report import SUMMARY_COLUMNS, read_report, summarize, write_outputs

__all__ = [
    "ConfigError",
    "ConvergenceReport",
    "ExperimentConfig",
    "REPORT_COLUMNS",
    "SUMMARY_COLUMNS",
    "load_config",
    "parse_config",
    "quarter_power_p",
    "read_report",
    "run_experiment",
    "summarize",
    "write_outputs",
]
