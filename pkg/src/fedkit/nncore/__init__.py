"""Self-contained differentiable training core: tensors, residual classifier,
cross-entropy, momentum SGD with a plateau learning-rate scheduler."""

from .model import ArchitectureSpec, EmptySplitError, ResidualClassifier, build_model
from .optim import (
    OptimizerConfig,
    OptimizerState,
    PlateauScheduler,
    TrainingDivergedError,
    scheduler_report,
    train_step,
)
from .weights import ConfigurationError, ModelWeights, ShapeMismatchError, as_tensor

__all__ = [
    "ArchitectureSpec",
    "ConfigurationError",
    "EmptySplitError",
    "ModelWeights",
    "OptimizerConfig",
    "OptimizerState",
    "PlateauScheduler",
    "ResidualClassifier",
    "ShapeMismatchError",
    "TrainingDivergedError",
    "as_tensor",
    "build_model",
    "scheduler_report",
    "train_step",
]
