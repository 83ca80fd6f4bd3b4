"""Forward/backward passes over a layer stack, plus a finite-difference checker."""

from dataclasses import dataclass
from typing import List

import numpy as np

from . import convkernels as ck
from .layers import ParameterSet, infer_shapes


@dataclass
class Tape:
    """Intermediates from one forward pass, consumed by backward()."""
    specs: list
    params: ParameterSet
    input_shape: tuple  # with batch axis
    saved: List[tuple]
    output_shape: tuple


def _param_names(i, spec):
    prefix = f"{i:02d}.{spec.kind}"
    return prefix + ".weight", prefix + ".bias"


def forward(specs, params, x):
    """Run x [N, ...] through the stack; returns (output, tape)."""
    x = np.asarray(x)
    infer_shapes(specs, x.shape[1:])
    input_shape = x.shape
    saved = []
    for i, spec in enumerate(specs):
        if spec.kind == "conv2d":
            wname, bname = _param_names(i, spec)
            y, cols = ck.conv2d_forward(x, params[wname], params[bname],
                                        spec.stride, spec.padding, return_cols=True)
            saved.append((cols, x.shape))
            x = y
        elif spec.kind == "transposed_conv2d":
            wname, bname = _param_names(i, spec)
            saved.append((x,))
            x = ck.tconv2d_forward(x, params[wname], params[bname],
                                   spec.stride, spec.padding)
        elif spec.kind == "dense":
            wname, bname = _param_names(i, spec)
            saved.append((x,))
            x = x @ params[wname].T + params[bname]
        elif spec.kind == "relu":
            mask = x > 0
            saved.append((mask,))
            x = x * mask
        elif spec.kind == "sigmoid":
            x = _sigmoid(x)
            saved.append((x,))
        elif spec.kind == "flatten":
            saved.append((x.shape,))
            x = x.reshape(x.shape[0], -1)
        elif spec.kind == "reshape":
            saved.append((x.shape,))
            x = x.reshape((x.shape[0],) + spec.target_shape)
    return x, Tape(list(specs), params, input_shape, saved, x.shape)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def backward(tape, output_gradient):
    """Gradients of a scalar loss given d(loss)/d(output).

    Returns (parameter gradients, input gradient); the parameter set carries
    the same names and shapes as the forward parameters.
    """
    gy = np.asarray(output_gradient)
    if gy.shape != tape.output_shape:
        raise ValueError(f"output_gradient shape {gy.shape} != forward output {tape.output_shape}")
    params = tape.params
    grads = {}
    for i in range(len(tape.specs) - 1, -1, -1):
        spec = tape.specs[i]
        saved = tape.saved[i]
        if spec.kind == "conv2d":
            wname, bname = _param_names(i, spec)
            cols, x_shape = saved
            gw, gb = ck.conv2d_weight_grad(gy, cols, params[wname].shape)
            grads[wname], grads[bname] = gw, gb
            gy = ck.conv2d_input_grad(gy, params[wname], spec.stride, spec.padding,
                                      x_shape[2], x_shape[3])
        elif spec.kind == "transposed_conv2d":
            wname, bname = _param_names(i, spec)
            (x,) = saved
            cols_gy = ck.im2col(gy, spec.kernel, spec.stride, spec.padding)
            gw, gb = ck.tconv2d_weight_grad(x, gy, params[wname].shape,
                                            spec.stride, spec.padding, cols_gy=cols_gy)
            grads[wname], grads[bname] = gw, gb
            gy = ck.tconv2d_input_grad(gy, params[wname], spec.stride, spec.padding,
                                       cols_gy=cols_gy)
        elif spec.kind == "dense":
            wname, bname = _param_names(i, spec)
            (x,) = saved
            grads[wname] = gy.T @ x
            grads[bname] = gy.sum(axis=0)
            gy = gy @ params[wname]
        elif spec.kind == "relu":
            (mask,) = saved
            gy = gy * mask
        elif spec.kind == "sigmoid":
            (y,) = saved
            gy = gy * y * (1.0 - y)
        elif spec.kind in ("flatten", "reshape"):
            (x_shape,) = saved
            gy = gy.reshape(x_shape)
    param_grads = ParameterSet({name: grads[name] for name in params.names if name in grads})
    return param_grads, gy


def gradient_check(specs, params, x, loss_fn, eps=1e-5, rng=None, max_coords=None):
    """Max relative error between backward() and central finite differences.

    loss_fn maps the forward output to (loss, d loss/d output). Every
    parameter coordinate is compared, or a seeded random subsample of at
    least 200 coordinates when max_coords is given. Coordinates where both
    gradients sit below the finite-difference noise floor carry no relative
    information and score zero.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    y, tape = forward(specs, params, x)
    loss, gy = loss_fn(y)
    if not np.isfinite(loss):
        raise ValueError(f"non-finite loss {loss!r}")
    analytic, _ = backward(tape, gy)

    def loss_at(p):
        out, _ = forward(specs, p, x)
        value = loss_fn(out)[0]
        if not np.isfinite(value):
            raise ValueError(f"non-finite loss {value!r} during finite differencing")
        return value

    coords = [(name, idx) for name, arr in params.items() for idx in range(arr.size)]
    if max_coords is not None and len(coords) > max_coords:
        n_pick = max(200, int(max_coords))
        rng = rng or np.random.default_rng(0)
        picks = rng.choice(len(coords), size=min(n_pick, len(coords)), replace=False)
        coords = [coords[i] for i in sorted(picks)]

    floor = 1e-5 * max(1.0, abs(loss))
    worst = 0.0
    work = params.copy()
    for name, idx in coords:
        flat = work[name].reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + eps
        up = loss_at(work)
        flat[idx] = orig - eps
        down = loss_at(work)
        flat[idx] = orig
        numeric = (up - down) / (2.0 * eps)
        exact = float(analytic[name].reshape(-1)[idx])
        if max(abs(exact), abs(numeric)) < floor:
            continue
        err = abs(exact - numeric) / max(abs(numeric), floor)
        if err > worst:
            worst = err
    return worst
