"""Experiment orchestration: configuration, runners, CSV/manifest output and the CLI."""

from .cli import main, parse_config, run_experiment
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, build_config

__all__ = ["EXPERIMENTS", "ConfigError", "ExperimentConfig", "build_config", "main", "parse_config", "run_experiment"]
