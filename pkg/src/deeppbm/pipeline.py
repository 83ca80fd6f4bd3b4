"""End-to-end background subtraction.

Background estimation is deterministic at inference: a frame's background is
the decoded posterior mean, so the mask is a pure threshold on the
frame-minus-background difference. Sampling stays available through
generate_background for synthesizing scene backgrounds.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rpca as rpca_mod
from .training import TrainConfig, train
from .vae import decode, encode
from .video_io import LUMA_WEIGHTS, FrameTensor


@dataclass
class SubtractConfig:
    threshold: float = 0.1
    channel_rule: str = "max-channel"  # or "luma"
    long_video_fraction: float = 0.2

    def validate(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        if self.channel_rule not in ("max-channel", "luma"):
            raise ValueError(f"unknown channel rule {self.channel_rule!r}")
        if not 0.0 < self.long_video_fraction <= 1.0:
            raise ValueError("long_video_fraction must be in (0, 1]")


@dataclass
class MaskSequence:
    """Per-frame binary masks plus the backgrounds they were derived from."""
    masks: np.ndarray  # uint8 [N, H, W], values 0/1
    backgrounds: Optional[FrameTensor]
    threshold: float
    method: str  # "deeppbm" or "rpca"
    frame_index_offset: int = 0

    @property
    def num_frames(self):
        return self.masks.shape[0]


def estimate_background(model, frames, batch_size=64):
    """Decode the posterior mean of every frame; output shape = input shape."""
    data = frames.data if isinstance(frames, FrameTensor) else np.asarray(frames)
    chunks = []
    for i in range(0, data.shape[0], batch_size):
        latent = encode(model, data[i:i + batch_size])
        chunks.append(decode(model, latent.mu))
    out = np.concatenate(chunks, axis=0)
    offset = frames.frame_index_offset if isinstance(frames, FrameTensor) else 0
    return FrameTensor(data=np.clip(out.astype(np.float32), 0.0, 1.0),
                       frame_index_offset=offset)


def difference_map(frame, background, channel_rule="max-channel"):
    """Per-pixel difference: max over channels of |frame - background|, or
    luma-weighted absolute difference. Accepts [C,H,W] or [N,C,H,W]."""
    f = np.asarray(frame, dtype=np.float32)
    b = np.asarray(background, dtype=np.float32)
    if f.shape != b.shape:
        raise ValueError(f"frame shape {f.shape} != background shape {b.shape}")
    diff = np.abs(f - b)
    axis = f.ndim - 3
    if channel_rule == "max-channel":
        return diff.max(axis=axis)
    weights = np.asarray(LUMA_WEIGHTS, dtype=np.float32)
    if f.shape[axis] == 1:
        return diff.squeeze(axis)
    return np.tensordot(diff, weights, axes=([axis], [0])) if axis == 3 \
        else np.tensordot(weights, diff, axes=([0], [0]))


def extract_mask(frame, background, config):
    """Binary mask: 1 where the channel-reduced difference exceeds threshold."""
    config.validate()
    d = difference_map(frame, background, config.channel_rule)
    return (d > config.threshold).astype(np.uint8)


def _mask_sequence(frames, backgrounds, config, method):
    masks = extract_mask(frames.data, backgrounds.data, config)
    return MaskSequence(masks=masks, backgrounds=backgrounds,
                        threshold=config.threshold, method=method,
                        frame_index_offset=frames.frame_index_offset)


def run_deeppbm(frames, model=None, subtract_config=None, train_config=None,
                architecture=None, channels=(32, 64, 128)):
    """Short-video protocol: train on all frames (unless a trained model is
    given), then mask every frame."""
    subtract_config = subtract_config or SubtractConfig()
    if model is None:
        model, _ = train(frames, train_config or TrainConfig(),
                         architecture=architecture, channels=channels)
    backgrounds = estimate_background(model, frames)
    return _mask_sequence(frames, backgrounds, subtract_config, "deeppbm")


def run_long_video(frames, train_config, subtract_config=None,
                   architecture=None, channels=(32, 64, 128)):
    """Train on the leading fraction of frames, then mask all of them."""
    subtract_config = subtract_config or SubtractConfig()
    subtract_config.validate()
    n = frames.num_frames
    n_train = int(math.floor(subtract_config.long_video_fraction * n))
    if n_train < 1:
        raise ValueError(
            f"long_video_fraction {subtract_config.long_video_fraction} of {n} frames "
            "leaves no training frames")
    head = FrameTensor(data=frames.data[:n_train],
                       frame_index_offset=frames.frame_index_offset)
    model, _ = train(head, train_config, architecture=architecture, channels=channels)
    backgrounds = estimate_background(model, frames)
    return _mask_sequence(frames, backgrounds, subtract_config, "deeppbm")


def rpca_backgrounds(frames, result):
    """Background frames from the low-rank columns, clipped into [0,1]."""
    obs = rpca_mod.ObservationMatrix.from_frames(frames)
    bg = obs.columns_to_frames(result.low_rank)
    return FrameTensor(data=np.clip(bg, 0.0, 1.0).astype(np.float32),
                       frame_index_offset=frames.frame_index_offset)


def run_rpca_bs(frames, subtract_config=None, lam=None, tol=1e-7, max_iter=500):
    """RPCA-path background subtraction with the shared thresholder."""
    subtract_config = subtract_config or SubtractConfig()
    obs = rpca_mod.ObservationMatrix.from_frames(frames)
    result = rpca_mod.rpca_decompose(obs, lam=lam, tol=tol, max_iter=max_iter)
    backgrounds = rpca_backgrounds(frames, result)
    return _mask_sequence(frames, backgrounds, subtract_config, "rpca")


def generate_background(model, mode="prior-sample", seed=0, frame=None,
                        scale=1.0, count=1):
    """Synthesize scene backgrounds from the generative model.

    mode "prior-sample" decodes z ~ N(0, I); mode "perturb" decodes
    mu(frame) + scale * eps. Returns frames [count, C, H, W] in [0, 1].
    """
    rng = np.random.default_rng(seed)
    d = model.latent_dim
    if mode == "prior-sample":
        z = rng.standard_normal((count, d))
    elif mode == "perturb":
        if frame is None:
            raise ValueError("perturb mode needs a frame")
        f = np.asarray(frame, dtype=np.float32)
        if f.ndim == 3:
            f = f[None]
        mu = encode(model, f).mu[0]
        z = mu[None, :] + rng.standard_normal((count, d)) * float(scale)
    else:
        raise ValueError(f"unknown generation mode {mode!r}")
    out = decode(model, z.astype(model.dtype))
    return np.clip(out, 0.0, 1.0)
