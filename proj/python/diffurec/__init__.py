"""Diffusion sequential recommender: Python bindings over the C++ core."""

from ._diffurec import (
    Checkpoint,
    CheckpointError,
    Dataset,
    NoiseSchedule,
    ParseError,
    TrainConfig,
    TrainingError,
    evaluate,
    infer,
    metric_single,
    popularity_evaluate,
    preprocess,
    synth,
    train,
    uncertainty_probe,
)

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "Dataset",
    "NoiseSchedule",
    "ParseError",
    "TrainConfig",
    "TrainingError",
    "evaluate",
    "infer",
    "metric_single",
    "popularity_evaluate",
    "preprocess",
    "synth",
    "train",
    "uncertainty_probe",
]
