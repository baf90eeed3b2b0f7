"""Experiment harness: synthetic problems, configuration, logging and diagnostics."""
from gksm.harness.config import ExperimentConfig, bundled_config_names, load_bundled
from gksm.harness.experiment import ExperimentResult, build_problem, run_experiment
from gksm.harness.rates import RateEnvelope, kl_rate_envelope

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "RateEnvelope",
    "build_problem",
    "bundled_config_names",
    "kl_rate_envelope",
    "load_bundled",
    "run_experiment",
]
