"""The probabilistic background model: encoder, decoder, and training loss.

A frame is compressed to a diagonal-Gaussian posterior over d latent
variables; the decoder reconstructs the frame from a reparameterized sample.
The loss is per-frame L1 reconstruction plus the closed-form KL divergence
from the standard-normal prior, averaged over the batch.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .diffnet import layers as dl
from .diffnet.engine import backward, forward


@dataclass
class LatentGaussian:
    """Posterior parameters, shape [d] for one frame or [N, d] for a batch."""
    mu: np.ndarray
    log_var: np.ndarray


@dataclass
class LossBreakdown:
    total: float
    reconstruction_l1: float
    kl: float
    batch_size: int


@dataclass
class VaeModel:
    encoder_specs: list
    decoder_specs: list
    encoder_params: dl.ParameterSet
    decoder_params: dl.ParameterSet
    latent_dim: int
    input_shape: Tuple[int, int, int]  # (C, H, W)

    @property
    def dtype(self):
        return self.encoder_params.dtype

    def astype(self, dtype):
        return VaeModel(self.encoder_specs, self.decoder_specs,
                        self.encoder_params.astype(dtype),
                        self.decoder_params.astype(dtype),
                        self.latent_dim, self.input_shape)


def vae_architecture(input_shape, latent_dim, channels=(32, 64, 128)):
    """Stride-2 conv stack encoder and its mirrored transposed-conv decoder.

    Every conv halves the spatial size (kernel 4, stride 2, padding 1), so
    height and width must be divisible by 2**len(channels).
    """
    c, h, w = input_shape
    n_down = len(channels)
    if h % (2 ** n_down) or w % (2 ** n_down):
        raise ValueError(f"input {h}x{w} not divisible by {2 ** n_down}")
    hb, wb = h >> n_down, w >> n_down
    encoder = []
    prev = c
    for ch in channels:
        encoder += [dl.conv2d(prev, ch, kernel=4, stride=2, padding=1), dl.relu()]
        prev = ch
    bottleneck = channels[-1] * hb * wb
    encoder += [dl.flatten(), dl.dense(bottleneck, 2 * latent_dim)]

    decoder = [dl.dense(latent_dim, bottleneck), dl.relu(),
               dl.reshape((channels[-1], hb, wb))]
    for ch_in, ch_out in zip(channels[::-1], list(channels[::-1][1:]) + [c]):
        decoder += [dl.transposed_conv2d(ch_in, ch_out, kernel=4, stride=2, padding=1)]
        decoder += [dl.relu()] if ch_out != c else [dl.sigmoid()]
    return encoder, decoder


def build_model(input_shape, latent_dim, rng, channels=(32, 64, 128),
                architecture=None, dtype=np.float32):
    """Initialize a model with seeded Glorot-uniform weights."""
    if architecture is not None:
        encoder_specs, decoder_specs = architecture
    else:
        encoder_specs, decoder_specs = vae_architecture(input_shape, latent_dim, channels)
    enc_out = dl.infer_shapes(encoder_specs, input_shape)[-1]
    if enc_out != (2 * latent_dim,):
        raise ValueError(f"encoder output {enc_out} != (2*{latent_dim},)")
    dec_out = dl.infer_shapes(decoder_specs, (latent_dim,))[-1]
    if dec_out != tuple(input_shape):
        raise ValueError(f"decoder output {dec_out} != input shape {tuple(input_shape)}")
    enc_params = dl.init_parameters(encoder_specs, input_shape, rng, dtype)
    dec_params = dl.init_parameters(decoder_specs, (latent_dim,), rng, dtype)
    return VaeModel(encoder_specs, decoder_specs, enc_params, dec_params,
                    latent_dim, tuple(input_shape))


def _as_batch(frames):
    if not isinstance(frames, np.ndarray):
        frames = np.asarray(getattr(frames, "data", frames))
    if frames.ndim != 4:
        raise ValueError(f"expected frames [N,C,H,W], got shape {frames.shape}")
    return frames


def encode(model, frames):
    """Posterior parameters for each frame: LatentGaussian with [N, d] arrays."""
    x = _as_batch(frames)
    if x.shape[1:] != model.input_shape:
        raise ValueError(f"frame shape {x.shape[1:]} != model input {model.input_shape}")
    out, _ = forward(model.encoder_specs, model.encoder_params,
                     x.astype(model.dtype, copy=False))
    d = model.latent_dim
    return LatentGaussian(mu=out[:, :d], log_var=out[:, d:])


def reparameterize(latent, noise):
    """z = mu + exp(log_var / 2) * noise, with externally drawn noise."""
    noise = np.asarray(noise)
    return latent.mu + np.exp(0.5 * latent.log_var) * noise


def decode(model, z):
    """Reconstructed frames [N,C,H,W] in [0,1] from latent vectors [N,d]."""
    z = np.asarray(z)
    if z.ndim == 1:
        z = z[None, :]
    if z.shape[1] != model.latent_dim:
        raise ValueError(f"latent width {z.shape[1]} != model latent_dim {model.latent_dim}")
    out, _ = forward(model.decoder_specs, model.decoder_params,
                     z.astype(model.dtype, copy=False))
    return out


def kl_divergence(latent):
    """-1/2 sum_k (1 + log var_k - mu_k^2 - var_k), per latent vector.

    Scalar for a single [d] latent, array [N] for a batch; always >= 0.
    """
    mu = np.asarray(latent.mu, dtype=np.float64)
    lv = np.asarray(latent.log_var, dtype=np.float64)
    kl = -0.5 * np.sum(1.0 + lv - mu * mu - np.exp(lv), axis=-1)
    return float(kl) if kl.ndim == 0 else kl


def l1_reconstruction(f, f_prime):
    """Per-frame sum of absolute pixel differences, averaged over the batch."""
    a = _as_batch(f)
    b = _as_batch(f_prime)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    per_frame = np.abs(a.astype(np.float64) - b.astype(np.float64)).reshape(a.shape[0], -1).sum(axis=1)
    return float(per_frame.mean())


def total_loss(model, frames, noise):
    """LossBreakdown for one batch; total = reconstruction_l1 + kl exactly."""
    breakdown, _ = _loss_forward(model, _as_batch(frames), np.asarray(noise))
    return breakdown


def loss_and_gradients(model, frames, noise):
    """Loss breakdown plus gradients w.r.t. encoder and decoder parameters."""
    x = _as_batch(frames).astype(model.dtype, copy=False)
    noise = np.asarray(noise).astype(model.dtype, copy=False)
    breakdown, ctx = _loss_forward(model, x, noise)
    n = x.shape[0]
    enc_tape, dec_tape, mu, log_var, recon = ctx

    g_recon = np.sign(recon - x).astype(model.dtype) / n
    dec_grads, gz = backward(dec_tape, g_recon)

    sigma = np.exp(0.5 * log_var)
    g_mu = gz + mu / n
    g_log_var = gz * noise * (0.5 * sigma) + (np.exp(log_var) - 1.0) / (2.0 * n)
    g_enc_out = np.concatenate([g_mu, g_log_var], axis=1).astype(model.dtype)
    enc_grads, _ = backward(enc_tape, g_enc_out)
    return breakdown, enc_grads, dec_grads


def _loss_forward(model, x, noise):
    x = x.astype(model.dtype, copy=False)
    noise = noise.astype(model.dtype, copy=False)
    n, d = x.shape[0], model.latent_dim
    if noise.shape != (n, d):
        raise ValueError(f"noise shape {noise.shape} != ({n}, {d})")
    if x.shape[1:] != model.input_shape:
        raise ValueError(f"frame shape {x.shape[1:]} != model input {model.input_shape}")
    enc_out, enc_tape = forward(model.encoder_specs, model.encoder_params, x)
    mu, log_var = enc_out[:, :d], enc_out[:, d:]
    z = mu + np.exp(0.5 * log_var) * noise
    recon, dec_tape = forward(model.decoder_specs, model.decoder_params, z)

    recon_l1 = float(np.abs(recon.astype(np.float64) - x.astype(np.float64))
                     .reshape(n, -1).sum(axis=1).mean())
    kl = float(np.mean(kl_divergence(LatentGaussian(mu, log_var))))
    if not np.isfinite(recon_l1):
        raise ValueError("non-finite loss term: reconstruction_l1")
    if not np.isfinite(kl):
        raise ValueError("non-finite loss term: kl")
    breakdown = LossBreakdown(total=recon_l1 + kl, reconstruction_l1=recon_l1,
                              kl=kl, batch_size=n)
    return breakdown, (enc_tape, dec_tape, mu, log_var, recon)
