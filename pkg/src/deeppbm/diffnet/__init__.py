"""Differentiable layer engine: specs, forward/backward, Adam, gradient checks."""

from .adam import AdamState, adam_step
from .convkernels import active_backend, available_backends, set_backend
from .engine import Tape, backward, forward, gradient_check
from .layers import (
    LayerSpec,
    ParameterSet,
    conv2d,
    dense,
    flatten,
    infer_shapes,
    init_parameters,
    parameter_shapes,
    relu,
    reshape,
    sigmoid,
    transposed_conv2d,
)

__all__ = [
    "AdamState", "adam_step", "active_backend", "available_backends",
    "set_backend", "Tape", "backward", "forward", "gradient_check",
    "LayerSpec", "ParameterSet", "conv2d", "dense", "flatten", "infer_shapes",
    "init_parameters", "parameter_shapes", "relu", "reshape", "sigmoid",
    "transposed_conv2d",
]
