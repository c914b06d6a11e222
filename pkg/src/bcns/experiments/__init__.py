"""Reproducible experiment scenarios, configuration and reporting."""

from bcns.experiments.config import ConfigError, load_config, scenario_names
from bcns.experiments.runner import run

__all__ = ["ConfigError", "load_config", "run", "scenario_names"]
