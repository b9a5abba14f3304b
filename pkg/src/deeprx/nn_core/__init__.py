"""Minimal deterministic deep-learning engine used by the receiver model."""

from . import backend
from .gradcheck import GradCheckReport, Sequential, grad_check
from .layers import (
    BatchNorm,
    BitHeads,
    Conv1D,
    GlobalPool,
    Layer,
    MaxPool3s2,
    ReLU,
    dense_concat,
    dense_split,
    global_pool,
    maxpool_3s2,
    relu,
    softmax_xent,
)
from .optim import OptimizerState, sgd_momentum_step

__all__ = [
    "backend",
    "BatchNorm",
    "BitHeads",
    "Conv1D",
    "GlobalPool",
    "GradCheckReport",
    "Layer",
    "MaxPool3s2",
    "ReLU",
    "Sequential",
    "OptimizerState",
    "dense_concat",
    "dense_split",
    "global_pool",
    "grad_check",
    "maxpool_3s2",
    "relu",
    "sgd_momentum_step",
    "softmax_xent",
]
