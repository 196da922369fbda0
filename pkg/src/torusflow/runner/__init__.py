"""Command line runner: configs, experiments, artifacts."""

from .config import ConfigError, RunConfig, default_config, load_config, parse_config
from .experiments import EXPERIMENTS, Outcome

__all__ = ["ConfigError", "RunConfig", "default_config", "load_config", "parse_config", "EXPERIMENTS", "Outcome"]
