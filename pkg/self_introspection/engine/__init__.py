"""
Minimal differentiation engine: dense layers, ELU/sigmoid/linear activations,
dropout, Adam and the triangular cyclic learning rate.
"""

from .network import (
    Activation,
    ForwardTrace,
    LayerSpec,
    Mode,
    NetworkSpec,
    Params,
    backprop,
    backward,
    elu,
    forward,
    half_mse,
    hidden_concat,
    input_gradient,
    trace,
)
from .optim import AdamState, adam_step, clr_lr
from .trainer import CycleRecord, FitResult, batch_indices, fit

__all__ = [
    "Activation",
    "AdamState",
    "CycleRecord",
    "FitResult",
    "ForwardTrace",
    "LayerSpec",
    "Mode",
    "NetworkSpec",
    "Params",
    "adam_step",
    "backprop",
    "backward",
    "batch_indices",
    "clr_lr",
    "elu",
    "fit",
    "forward",
    "half_mse",
    "hidden_concat",
    "input_gradient",
    "trace",
]
