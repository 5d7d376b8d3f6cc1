"""Experiment orchestration: configuration, seeded Monte Carlo, output and CLI."""

from .config import ExperimentConfig, build_config, parse_grid
from .experiments import CountSummary, ExperimentResult, run

__all__ = ["CountSummary", "ExperimentConfig", "ExperimentResult", "build_config", "parse_grid", "run"]
