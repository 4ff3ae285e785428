from .config import (ConfigError, ExperimentConfig, Spec, load_config,
                     parse_config, serialize_config)
from .runner import (CSV_HEADER, run_experiment, run_trial, make_trial_stream,
                     build_estimator, build_generator, build_adversary)
from .bench import BenchResult, fit_scaling, run_preset
from .svg import emit_svg

__all__ = [
    "ConfigError", "ExperimentConfig", "Spec", "load_config", "parse_config",
    "serialize_config", "CSV_HEADER", "run_experiment", "run_trial",
    "make_trial_stream", "build_estimator", "build_generator", "build_adversary",
    "BenchResult", "fit_scaling", "run_preset", "emit_svg",
]
