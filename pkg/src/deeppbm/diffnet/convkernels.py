"""Convolution primitives shared by the layer engine.

The im2col/col2im gather-scatter is the hot kernel; a compiled Cython
implementation is preferred and a numpy fallback is selected at import when
the extension is unavailable. The surrounding contraction is a single BLAS
matmul in both cases, so the two backends return bit-identical results.

Set DEEPPBM_KERNELS=numpy|cython to force a backend (used by the benchmark).
"""

import os

import numpy as np

from . import _im2col_np

try:
    from . import _im2col_cy
except ImportError:  # extension not built
    _im2col_cy = None

_backend_name = None
_im2col = None
_col2im = None


def set_backend(name):
    """Select the gather/scatter backend: "cython" or "numpy"."""
    global _backend_name, _im2col, _col2im
    if name == "cython":
        if _im2col_cy is None:
            raise RuntimeError("compiled kernel extension is not available")
        _im2col, _col2im = _im2col_cy.im2col, _im2col_cy.col2im
    elif name == "numpy":
        _im2col, _col2im = _im2col_np.im2col, _im2col_np.col2im
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    _backend_name = name


def active_backend():
    return _backend_name


def available_backends():
    return ("cython", "numpy") if _im2col_cy is not None else ("numpy",)


_forced = os.environ.get("DEEPPBM_KERNELS")
if _forced:
    set_backend(_forced)
else:
    set_backend("cython" if _im2col_cy is not None else "numpy")


def im2col(x, kernel, stride, padding):
    x = np.ascontiguousarray(x)
    return _im2col(x, kernel, stride, padding)


def col2im(cols, kernel, stride, padding, height, width):
    cols = np.ascontiguousarray(cols)
    return _col2im(cols, kernel, stride, padding, height, width)


def conv_output_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def tconv_output_size(size, kernel, stride, padding):
    return (size - 1) * stride - 2 * padding + kernel


def conv2d_forward(x, weight, bias, stride, padding, return_cols=False):
    """x [N,Cin,H,W], weight [Cout,Cin,k,k] -> y [N,Cout,Ho,Wo]."""
    n, cin, h, w = x.shape
    cout, cin_w, k, _ = weight.shape
    if cin_w != cin:
        raise ValueError(f"conv2d: input has {cin} channels, weight expects {cin_w}")
    ho = conv_output_size(h, k, stride, padding)
    wo = conv_output_size(w, k, stride, padding)
    cols = im2col(x, k, stride, padding)
    y = np.matmul(weight.reshape(cout, cin * k * k), cols)
    if bias is not None:
        y += bias[:, None]
    y = y.reshape(n, cout, ho, wo)
    return (y, cols) if return_cols else y


def conv2d_input_grad(gy, weight, stride, padding, height, width):
    n = gy.shape[0]
    cout, cin, k, _ = weight.shape
    gy_mat = gy.reshape(n, cout, -1)
    cols_grad = np.matmul(weight.reshape(cout, cin * k * k).T, gy_mat)
    return col2im(cols_grad, k, stride, padding, height, width)


def conv2d_weight_grad(gy, cols, weight_shape):
    """Weight/bias gradients from the forward's im2col buffer."""
    cout = weight_shape[0]
    n = gy.shape[0]
    gy_mat = gy.reshape(n, cout, -1)
    gw = np.matmul(gy_mat, cols.transpose(0, 2, 1)).sum(axis=0)
    gb = gy.sum(axis=(0, 2, 3))
    return gw.reshape(weight_shape), gb


def tconv2d_forward(x, weight, bias, stride, padding):
    """x [N,Cin,H,W], weight [Cin,Cout,k,k] -> y [N,Cout,Ho,Wo], the adjoint
    scatter of conv2d with the same kernel."""
    n, cin, h, w = x.shape
    cin_w, cout, k, _ = weight.shape
    if cin_w != cin:
        raise ValueError(f"transposed_conv2d: input has {cin} channels, weight expects {cin_w}")
    ho = tconv_output_size(h, k, stride, padding)
    wo = tconv_output_size(w, k, stride, padding)
    cols = np.matmul(weight.reshape(cin, cout * k * k).T, x.reshape(n, cin, h * w))
    y = col2im(cols, k, stride, padding, ho, wo)
    if bias is not None:
        y += bias[None, :, None, None]
    return y


def tconv2d_input_grad(gy, weight, stride, padding, cols_gy=None):
    n = gy.shape[0]
    cin, cout, k, _ = weight.shape
    if cols_gy is None:
        cols_gy = im2col(gy, k, stride, padding)
    gx = np.matmul(weight.reshape(cin, cout * k * k), cols_gy)
    h = conv_output_size(gy.shape[2], k, stride, padding)
    w = conv_output_size(gy.shape[3], k, stride, padding)
    return gx.reshape(n, cin, h, w)


def tconv2d_weight_grad(x, gy, weight_shape, stride, padding, cols_gy=None):
    n, cin, h, w = x.shape
    _, cout, k, _ = weight_shape
    if cols_gy is None:
        cols_gy = im2col(gy, k, stride, padding)
    gw = np.matmul(x.reshape(n, cin, h * w), cols_gy.transpose(0, 2, 1)).sum(axis=0)
    gb = gy.sum(axis=(0, 2, 3))
    return gw.reshape(weight_shape), gb
