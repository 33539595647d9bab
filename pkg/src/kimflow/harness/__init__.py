"""Config-driven experiments, reports and the ``kimflow`` command line."""

from .config import ExperimentConfig, load_config, loads_config
from .experiments import run, run_constants, run_decay, run_stability, run_theta_check

__all__ = ["ExperimentConfig", "load_config", "loads_config", "run", "run_constants",
           "run_decay", "run_stability", "run_theta_check"]
