"""1D CNN classifier with hand-written backpropagation."""

from .io import load_model, save_model
from .model import (
    STANDARD_FILTERS, ArchitectureDescriptor, CnnModel, StageSpec, backward, features, forward,
    init_model, loss, predict, predict_proba,
)
from .train import History, TrainConfig, accuracy, train

__all__ = [
    "STANDARD_FILTERS", "ArchitectureDescriptor", "CnnModel", "History", "StageSpec", "TrainConfig",
    "accuracy", "backward", "features", "forward", "init_model", "load_model", "loss", "predict",
    "predict_proba", "save_model", "train",
]
