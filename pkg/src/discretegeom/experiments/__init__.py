"""Configured experiment pipelines with CSV and JSON output."""

from .config import EXPERIMENTS, ExperimentConfig, default_config, dump_config, load_config
from .report import ExperimentReport, Gate
from .runners import (RUNNERS, run, run_bayes, run_curvature_oracle, run_depth_comparison, run_fig1,
                      run_lindyn, run_noise_sweep, run_richlazy, run_robustness)

__all__ = [
    "EXPERIMENTS", "ExperimentConfig", "ExperimentReport", "Gate", "RUNNERS", "default_config",
    "dump_config", "load_config", "run", "run_bayes", "run_curvature_oracle", "run_depth_comparison",
    "run_fig1", "run_lindyn", "run_noise_sweep", "run_richlazy", "run_robustness",
]
