"""Model architectures, targets, features and the training loop."""
from .builders import (MlpBaselineSpec, MultiTaskCnnSpec, SequentialCnnSpec, build_mlp, build_model,
                       build_multitask_cnn, build_sequential_cnn, default_spec)
from .data import MtlTarget, WindowDataset, build_dataset, make_mtl_targets
from .features import engineer_features, engineer_features_batch
from .training import (TrainConfig, TrainedModel, TrainResult, TrainingDivergedError, evaluate, predict,
                       predict_series, train)

__all__ = [
    "MlpBaselineSpec", "MultiTaskCnnSpec", "SequentialCnnSpec", "build_mlp", "build_model",
    "build_multitask_cnn", "build_sequential_cnn", "default_spec", "MtlTarget", "WindowDataset",
    "build_dataset", "make_mtl_targets", "engineer_features", "engineer_features_batch", "TrainConfig",
    "TrainedModel", "TrainResult", "TrainingDivergedError", "evaluate", "predict", "predict_series", "train",
]
