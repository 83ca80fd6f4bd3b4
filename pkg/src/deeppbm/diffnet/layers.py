"""Layer descriptions, shape inference, and parameter containers."""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .convkernels import conv_output_size, tconv_output_size

LAYER_KINDS = ("conv2d", "transposed_conv2d", "dense", "relu", "sigmoid", "flatten", "reshape")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: Optional[int] = None
    out_channels: Optional[int] = None
    kernel: Optional[int] = None
    stride: int = 1
    padding: int = 0
    in_features: Optional[int] = None
    out_features: Optional[int] = None
    target_shape: Optional[Tuple[int, ...]] = None

    def to_dict(self):
        d = {"kind": self.kind}
        for field in ("in_channels", "out_channels", "kernel", "in_features",
                      "out_features"):
            value = getattr(self, field)
            if value is not None:
                d[field] = value
        if self.kind in ("conv2d", "transposed_conv2d"):
            d["stride"] = self.stride
            d["padding"] = self.padding
        if self.target_shape is not None:
            d["target_shape"] = list(self.target_shape)
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        kind = d.pop("kind")
        if kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {kind!r}")
        if "target_shape" in d:
            d["target_shape"] = tuple(d["target_shape"])
        return LayerSpec(kind=kind, **d)


def conv2d(in_channels, out_channels, kernel, stride=1, padding=0):
    return LayerSpec("conv2d", in_channels=in_channels, out_channels=out_channels,
                     kernel=kernel, stride=stride, padding=padding)


def transposed_conv2d(in_channels, out_channels, kernel, stride=1, padding=0):
    return LayerSpec("transposed_conv2d", in_channels=in_channels,
                     out_channels=out_channels, kernel=kernel, stride=stride,
                     padding=padding)


def dense(in_features, out_features):
    return LayerSpec("dense", in_features=in_features, out_features=out_features)


def relu():
    return LayerSpec("relu")


def sigmoid():
    return LayerSpec("sigmoid")


def flatten():
    return LayerSpec("flatten")


def reshape(target_shape):
    return LayerSpec("reshape", target_shape=tuple(target_shape))


def infer_shapes(specs, input_shape):
    """Per-layer output shapes (batch axis excluded) for a layer stack.

    Raises ValueError if consecutive layers do not compose, so a validated
    spec list can never hit a shape error during forward/backward.
    """
    shape = tuple(input_shape)
    shapes = []
    for i, spec in enumerate(specs):
        where = f"layer {i} ({spec.kind})"
        if spec.kind == "conv2d":
            if len(shape) != 3 or shape[0] != spec.in_channels:
                raise ValueError(f"{where}: expected input ({spec.in_channels},H,W), got {shape}")
            h = conv_output_size(shape[1], spec.kernel, spec.stride, spec.padding)
            w = conv_output_size(shape[2], spec.kernel, spec.stride, spec.padding)
            if h < 1 or w < 1:
                raise ValueError(f"{where}: output size {h}x{w} not positive for input {shape}")
            shape = (spec.out_channels, h, w)
        elif spec.kind == "transposed_conv2d":
            if len(shape) != 3 or shape[0] != spec.in_channels:
                raise ValueError(f"{where}: expected input ({spec.in_channels},H,W), got {shape}")
            h = tconv_output_size(shape[1], spec.kernel, spec.stride, spec.padding)
            w = tconv_output_size(shape[2], spec.kernel, spec.stride, spec.padding)
            if h < 1 or w < 1:
                raise ValueError(f"{where}: output size {h}x{w} not positive for input {shape}")
            shape = (spec.out_channels, h, w)
        elif spec.kind == "dense":
            if len(shape) != 1 or shape[0] != spec.in_features:
                raise ValueError(f"{where}: expected input ({spec.in_features},), got {shape}")
            shape = (spec.out_features,)
        elif spec.kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif spec.kind == "reshape":
            if len(shape) != 1 or shape[0] != int(np.prod(spec.target_shape)):
                raise ValueError(f"{where}: cannot reshape {shape} to {spec.target_shape}")
            shape = tuple(spec.target_shape)
        elif spec.kind in ("relu", "sigmoid"):
            pass
        else:
            raise ValueError(f"{where}: unknown layer kind {spec.kind!r}")
        shapes.append(shape)
    return shapes


class ParameterSet:
    """Ordered named tensors; iteration follows declaration order."""

    def __init__(self, tensors=None):
        self._tensors = dict(tensors) if tensors is not None else {}

    @property
    def names(self):
        return list(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def __contains__(self, name):
        return name in self._tensors

    def __getitem__(self, name):
        return self._tensors[name]

    def __setitem__(self, name, value):
        self._tensors[name] = value

    def items(self):
        return self._tensors.items()

    def values(self):
        return self._tensors.values()

    def map(self, fn):
        return ParameterSet({name: fn(arr) for name, arr in self.items()})

    def copy(self):
        return self.map(np.copy)

    def astype(self, dtype):
        return self.map(lambda a: a.astype(dtype))

    @staticmethod
    def zeros_like(other):
        return other.map(np.zeros_like)

    @property
    def dtype(self):
        return next(iter(self._tensors.values())).dtype

    def size(self):
        return sum(a.size for a in self._tensors.values())

    def allfinite(self):
        return all(np.isfinite(a).all() for a in self._tensors.values())

    def __repr__(self):
        inner = ", ".join(f"{n}{list(a.shape)}" for n, a in self.items())
        return f"ParameterSet({inner})"


def parameter_shapes(specs, input_shape):
    """Name -> shape for every trainable tensor, in declaration order."""
    infer_shapes(specs, input_shape)  # validate composition
    shapes = {}
    for i, spec in enumerate(specs):
        prefix = f"{i:02d}.{spec.kind}"
        if spec.kind == "conv2d":
            shapes[prefix + ".weight"] = (spec.out_channels, spec.in_channels, spec.kernel, spec.kernel)
            shapes[prefix + ".bias"] = (spec.out_channels,)
        elif spec.kind == "transposed_conv2d":
            shapes[prefix + ".weight"] = (spec.in_channels, spec.out_channels, spec.kernel, spec.kernel)
            shapes[prefix + ".bias"] = (spec.out_channels,)
        elif spec.kind == "dense":
            shapes[prefix + ".weight"] = (spec.out_features, spec.in_features)
            shapes[prefix + ".bias"] = (spec.out_features,)
    return shapes


def _fan_in_out(kind, shape):
    if kind == "dense":
        return shape[1], shape[0]
    k2 = shape[2] * shape[3]
    if kind == "conv2d":
        return shape[1] * k2, shape[0] * k2
    return shape[0] * k2, shape[1] * k2  # transposed_conv2d


def init_parameters(specs, input_shape, rng, dtype=np.float32):
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases."""
    params = ParameterSet()
    for name, shape in parameter_shapes(specs, input_shape).items():
        kind = name.split(".")[1]
        if name.endswith(".weight"):
            fan_in, fan_out = _fan_in_out(kind, shape)
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    return params
