"""Experiment configuration, sweeps, oracle comparison and aggregation."""

from .config import ConfigError, ExperimentConfig, load_config
from .oracle_suite import OracleSuiteConfig, run_oracle_suite, suite_summary
from .summarize import summarize
from .sweep import CSV_COLUMNS, run_sweep, trial_seed

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "OracleSuiteConfig",
           "run_oracle_suite", "suite_summary", "summarize", "CSV_COLUMNS", "run_sweep",
           "trial_seed"]
