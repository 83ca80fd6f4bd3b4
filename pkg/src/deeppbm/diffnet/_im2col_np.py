"""Pure-numpy im2col/col2im, the fallback when the compiled core is absent.

Accumulation order in col2im is (kernel row, kernel col) lexicographic so the
compiled backend can reproduce results bit for bit.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def im2col(x, kernel, stride, padding):
    """Gather sliding k x k windows of x [N,C,H,W] into [N, C*k*k, Ho*Wo]."""
    n, c, h, w = x.shape
    k, s, p = kernel, stride, padding
    ho = (h + 2 * p - k) // s + 1
    wo = (w + 2 * p - k) // s + 1
    if p > 0:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    sn, sc, sh, sw = x.strides
    windows = as_strided(
        x,
        shape=(n, c, k, k, ho, wo),
        strides=(sn, sc, sh, sw, sh * s, sw * s),
    )
    # reshape copies; windows[n,c,a,b,i,j] -> cols[n, (c*k+a)*k+b, i*wo+j]
    return windows.reshape(n, c * k * k, ho * wo)


def col2im(cols, kernel, stride, padding, height, width):
    """Adjoint of im2col: scatter-add [N, C*k*k, Ho*Wo] back to [N,C,H,W]."""
    k, s, p = kernel, stride, padding
    ho = (height + 2 * p - k) // s + 1
    wo = (width + 2 * p - k) // s + 1
    n = cols.shape[0]
    c = cols.shape[1] // (k * k)
    blocks = cols.reshape(n, c, k, k, ho, wo)
    out = np.zeros((n, c, height + 2 * p, width + 2 * p), dtype=cols.dtype)
    for a in range(k):
        for b in range(k):
            out[:, :, a:a + s * ho:s, b:b + s * wo:s] += blocks[:, :, a, b]
    if p > 0:
        out = np.ascontiguousarray(out[:, :, p:p + height, p:p + width])
    return out
