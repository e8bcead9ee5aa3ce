"""From-scratch convolutional networks: layers, variants, training, model files."""

from .layers import softmax_cross_entropy
from .model import (PUBLISHED, SHRUNKEN, VARIANTS, ArchParams, ModelConfig, Network, build_model,
                    shape_chain)
from .serialize import ModelFileError, load_model, save_model
from .training import DivergenceError, TrainConfig, TrainResult, predict, train

__all__ = [
    "ArchParams", "DivergenceError", "ModelConfig", "ModelFileError", "Network", "PUBLISHED",
    "SHRUNKEN", "TrainConfig", "TrainResult", "VARIANTS", "build_model", "load_model", "predict",
    "save_model", "shape_chain", "softmax_cross_entropy", "train",
]
