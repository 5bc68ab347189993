"""Minimal float64 neural-network engine with manual backpropagation."""
from .functional import (LOG_FLOOR, ShapeError, conv1d_forward, cross_entropy, dense_forward,
                         maxpool_forward, relu, softmax, softmax_cross_entropy)
from .graph import INPUT, NetworkGraph
from .gradcheck import GradCheckReport, NondeterministicGraphError, cross_entropy_loss, grad_check
from .layers import (BatchNorm, Concat, Conv1D, Dense, Dropout, Flatten, Layer, MaxPool1D,
                     MissingCacheError, Normalize, Pick, ReLU)
from .optim import OptimizerState, sgd_momentum_step

__all__ = [
    "LOG_FLOOR", "ShapeError", "conv1d_forward", "cross_entropy", "dense_forward", "maxpool_forward",
    "relu", "softmax", "softmax_cross_entropy", "INPUT", "NetworkGraph", "GradCheckReport",
    "NondeterministicGraphError", "cross_entropy_loss", "grad_check", "BatchNorm", "Concat", "Conv1D",
    "Dense", "Dropout", "Flatten", "Layer", "MaxPool1D", "MissingCacheError", "Normalize", "Pick",
    "ReLU", "OptimizerState", "sgd_momentum_step",
]
