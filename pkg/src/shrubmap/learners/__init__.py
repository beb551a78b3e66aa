"""Base learners and the stacking meta-learner."""

from .forest import ForestModel, ForestParams, train_forest
from .gbm import GbmModel, GbmParams, train_gbm
from .mlp import MlpModel, MlpParams, train_mlp
from .serialize import load_model, model_from_bytes, model_to_bytes, save_model
from .stacker import EnsembleModel, StackerModel, train_stacker

__all__ = [
    "EnsembleModel",
    "ForestModel",
    "ForestParams",
    "GbmModel",
    "GbmParams",
    "MlpModel",
    "MlpParams",
    "StackerModel",
    "load_model",
    "model_from_bytes",
    "model_to_bytes",
    "save_model",
    "train_forest",
    "train_gbm",
    "train_mlp",
    "train_stacker",
]
