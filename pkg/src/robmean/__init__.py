"""Online robust mean estimation under strong contamination.

Library layout:

    core       streams, replay, traces, online discipline
    linalg     weighted moments, dominant eigenpair, weighted median
    filtering  online weighted filter + naive per-round baseline
    binary     group-median estimation for bounded bit products
    nonparam   tail-profile grid estimator and Gaussian CDF inversion
    blocks     direction sets, correlated labels, minimax recovery
    threat     clean-data generators and adversaries
    stability  directional-moment stability certification
    harness    config, experiment runner, benchmarks, CLI
"""

from .core import (AssumptionViolation, EstimateTrace, OnlineDisciplineError,
                   OnlineEstimator, SampleStream, WeightVector, l2_error,
                   make_stream, replay)

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation", "EstimateTrace", "OnlineDisciplineError",
    "OnlineEstimator", "SampleStream", "WeightVector", "l2_error",
    "make_stream", "replay", "__version__",
]
