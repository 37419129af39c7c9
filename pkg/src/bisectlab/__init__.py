"""Planted-bisection exact recovery: model, thresholds, spectral start, refinement, oracles, experiments."""

from .graph_model import (
    Graph,
    Labelling,
    MajorityCensus,
    ModelParams,
    PlantedInstance,
    Sense,
    census,
    generate,
    hamming_up_to_sign,
    overlap_error,
)
from .refine import RecoveryTrace, ReplicaConfig, StageError, recover
from .thresholds import ThresholdReport, exact_P, perturbed_P, report

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "Labelling",
    "MajorityCensus",
    "ModelParams",
    "PlantedInstance",
    "RecoveryTrace",
    "ReplicaConfig",
    "Sense",
    "StageError",
    "ThresholdReport",
    "census",
    "exact_P",
    "generate",
    "hamming_up_to_sign",
    "overlap_error",
    "perturbed_P",
    "recover",
    "report",
]
