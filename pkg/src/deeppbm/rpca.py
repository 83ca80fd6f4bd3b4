"""Principal component pursuit baseline.

Decomposes the observation matrix M (one column per frame) into a low-rank
background L plus a sparse foreground S by inexact augmented Lagrangian
iterations:

    L <- SVT(M - S + Y/mu, 1/mu)
    S <- shrink(M - L + Y/mu, lambda/mu)
    Y <- Y + mu (M - L - S);  mu <- min(rho mu, mu_max)
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


@dataclass
class ObservationMatrix:
    """Frames flattened column-per-frame: matrix [P, N], P = C*H*W."""
    matrix: np.ndarray
    frame_shape: Tuple[int, int, int]
    frame_index_offset: int = 0

    @staticmethod
    def from_frames(frames):
        data = frames.data if hasattr(frames, "data") else np.asarray(frames)
        if data.ndim != 4:
            raise ValueError(f"expected frames [N,C,H,W], got {data.shape}")
        n = data.shape[0]
        matrix = data.reshape(n, -1).T.astype(np.float64)
        return ObservationMatrix(matrix=matrix, frame_shape=data.shape[1:],
                                 frame_index_offset=getattr(frames, "frame_index_offset", 0))

    def columns_to_frames(self, matrix):
        """Reshape a [P, N] matrix back to frames [N, C, H, W]."""
        return matrix.T.reshape((matrix.shape[1],) + tuple(self.frame_shape))


@dataclass
class RpcaResult:
    low_rank: np.ndarray
    sparse: np.ndarray
    iterations: int
    residual: float
    converged: bool
    lambda_used: float
    rank: int


def soft_threshold(x, tau):
    """Elementwise sign(x) * max(|x| - tau, 0)."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def singular_value_threshold(x, tau):
    """Soft-threshold the singular values; returns (matrix, resulting rank)."""
    if not np.isfinite(x).all():
        raise ValueError("non-finite input to SVD")
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    shrunk = np.maximum(s - tau, 0.0)
    rank = int(np.count_nonzero(shrunk))
    return (u[:, :rank] * shrunk[:rank]) @ vt[:rank], rank


def rpca_decompose(observation, lam=None, tol=1e-7, max_iter=500, rho=1.5,
                   mu=None):
    """Split M into low-rank + sparse; stops when ||M-L-S||_F/||M||_F <= tol.

    Hitting max_iter first is flagged via RpcaResult.converged, not an error.
    lam defaults to 1/sqrt(max(P, N)).
    """
    m = observation.matrix if isinstance(observation, ObservationMatrix) \
        else np.asarray(observation, dtype=np.float64)
    if m.size == 0:
        raise ValueError("empty observation matrix")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    p, n = m.shape
    if lam is None:
        lam = 1.0 / np.sqrt(max(p, n))

    norm_fro = np.linalg.norm(m)
    if norm_fro == 0.0:
        zero = np.zeros_like(m)
        return RpcaResult(zero, zero.copy(), iterations=0, residual=0.0,
                          converged=True, lambda_used=lam, rank=0)

    norm_two = np.linalg.norm(m, 2)
    # standard dual-variable warm start
    y = m / max(norm_two, np.abs(m).max() / lam)
    if mu is None:
        mu = 1.25 / norm_two
    mu_max = mu * 1e7

    s = np.zeros_like(m)
    low = np.zeros_like(m)
    rank = 0
    residual = 1.0
    iterations = 0
    for iterations in range(1, max_iter + 1):
        low, rank = singular_value_threshold(m - s + y / mu, 1.0 / mu)
        s = soft_threshold(m - low + y / mu, lam / mu)
        z = m - low - s
        y = y + mu * z
        mu = min(rho * mu, mu_max)
        residual = np.linalg.norm(z) / norm_fro
        if residual <= tol:
            break
    return RpcaResult(low_rank=low, sparse=s, iterations=iterations,
                      residual=float(residual), converged=residual <= tol,
                      lambda_used=float(lam), rank=rank)
