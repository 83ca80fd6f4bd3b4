"""Training loop and checkpoint persistence.

Checkpoint layout: magic "DPBM", u32 LE version, u32 LE metadata length,
UTF-8 JSON metadata (architecture, latent dim, input shape, precision,
training config, history, tensor manifest), then every parameter tensor in
declared order as little-endian floats, row-major. Round trips are
bit-exact.
"""

import json
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .diffnet.adam import AdamState, adam_step
from .diffnet.layers import LayerSpec, ParameterSet
from .vae import LossBreakdown, VaeModel, build_model, loss_and_gradients

CHECKPOINT_MAGIC = b"DPBM"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    latent_dim: int = 16
    batch_size: int = 140
    epochs: int = 200
    learning_rate: float = 1e-3
    seed: int = 0
    shuffle: bool = True
    precision: int = 32
    checkpoint_every: int = 0

    def validate(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.precision not in (32, 64):
            raise ValueError("precision must be 32 or 64")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")


@dataclass
class TrainHistory:
    epochs: List[LossBreakdown] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)

    def __len__(self):
        return len(self.epochs)


def train(frames, config, architecture=None, channels=(32, 64, 128),
          on_epoch=None, checkpoint_path=None):
    """Fit the background model to a frame tensor.

    Deterministic given config.seed: weight init, shuffling, and
    reparameterization noise draw from three independent seeded streams, so
    e.g. changing epochs never perturbs the init.

    Returns (VaeModel, TrainHistory).
    """
    config.validate()
    data = frames.data if hasattr(frames, "data") else np.asarray(frames)
    if data.ndim != 4 or data.shape[0] < 1:
        raise ValueError(f"expected nonempty frames [N,C,H,W], got {data.shape}")
    dtype = np.float32 if config.precision == 32 else np.float64
    x = data.astype(dtype, copy=False)
    n = x.shape[0]
    input_shape = x.shape[1:]

    init_ss, shuffle_ss, noise_ss = np.random.SeedSequence(config.seed).spawn(3)
    init_rng = np.random.default_rng(init_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    noise_rng = np.random.default_rng(noise_ss)

    model = build_model(input_shape, config.latent_dim, init_rng,
                        channels=channels, architecture=architecture, dtype=dtype)
    merged = _merge_params(model.encoder_params, model.decoder_params)
    state = AdamState.init(merged, lr=config.learning_rate)
    history = TrainHistory()

    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = shuffle_rng.permutation(n) if config.shuffle else np.arange(n)
        sums = np.zeros(3)
        for b0 in range(0, n, config.batch_size):
            idx = order[b0:b0 + config.batch_size]
            batch = x[idx]
            noise = noise_rng.standard_normal((len(idx), config.latent_dim)).astype(dtype)
            try:
                breakdown, enc_g, dec_g = loss_and_gradients(model, batch, noise)
            except ValueError as exc:
                raise TrainingDiverged(
                    f"epoch {epoch + 1}, batch starting at {b0}: {exc}") from exc
            if not np.isfinite(breakdown.total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch + 1}, batch starting at {b0}")
            grads = _merge_params(enc_g, dec_g)
            merged, state = adam_step(merged, grads, state)
            enc_p, dec_p = _split_params(merged)
            model = VaeModel(model.encoder_specs, model.decoder_specs, enc_p, dec_p,
                             model.latent_dim, model.input_shape)
            sums += np.array([breakdown.total, breakdown.reconstruction_l1,
                              breakdown.kl]) * len(idx)
        avg = sums / n
        stats = LossBreakdown(total=float(avg[0]), reconstruction_l1=float(avg[1]),
                              kl=float(avg[2]), batch_size=n)
        elapsed = time.perf_counter() - started
        history.epochs.append(stats)
        history.seconds.append(elapsed)
        if on_epoch is not None:
            on_epoch(epoch + 1, stats, elapsed)
        if (checkpoint_path is not None and config.checkpoint_every > 0
                and (epoch + 1) % config.checkpoint_every == 0):
            save_checkpoint(model, history, checkpoint_path, train_config=config)
    return model, history


def _merge_params(enc, dec):
    merged = ParameterSet()
    for name, arr in enc.items():
        merged["enc." + name] = arr
    for name, arr in dec.items():
        merged["dec." + name] = arr
    return merged


def _split_params(merged):
    enc, dec = ParameterSet(), ParameterSet()
    for name, arr in merged.items():
        side, rest = name.split(".", 1)
        (enc if side == "enc" else dec)[rest] = arr
    return enc, dec


def _history_meta(history):
    return {
        "total": [e.total for e in history.epochs],
        "reconstruction_l1": [e.reconstruction_l1 for e in history.epochs],
        "kl": [e.kl for e in history.epochs],
        "batch_size": [e.batch_size for e in history.epochs],
        "seconds": list(history.seconds),
    }


def _history_from_meta(meta):
    history = TrainHistory()
    if not meta:
        return history
    for tot, rec, kl, bs in zip(meta["total"], meta["reconstruction_l1"],
                                meta["kl"], meta["batch_size"]):
        history.epochs.append(LossBreakdown(tot, rec, kl, bs))
    history.seconds = list(meta.get("seconds", []))
    return history


def save_checkpoint(model, history, path, train_config=None):
    """Serialize model + history; load_checkpoint restores them bit-exactly."""
    precision = 32 if model.dtype == np.float32 else 64
    tensors = [("enc." + n, a) for n, a in model.encoder_params.items()]
    tensors += [("dec." + n, a) for n, a in model.decoder_params.items()]
    meta = {
        "architecture": {
            "encoder": [s.to_dict() for s in model.encoder_specs],
            "decoder": [s.to_dict() for s in model.decoder_specs],
        },
        "latent_dim": model.latent_dim,
        "input_shape": list(model.input_shape),
        "precision": precision,
        "train_config": _config_meta(train_config),
        "history": _history_meta(history) if history is not None else None,
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    blob = json.dumps(meta).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wire = "<f4" if precision == 32 else "<f8"
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr).astype(wire, copy=False).tobytes())


def _config_meta(train_config):
    if train_config is None:
        return None
    if isinstance(train_config, TrainConfig):
        return asdict(train_config)
    return dict(train_config)


def load_checkpoint(path):
    """Returns (VaeModel, TrainHistory). Raises CheckpointError on bad files."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise CheckpointError("truncated checkpoint: missing header")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    meta_len = struct.unpack("<I", raw[8:12])[0]
    if len(raw) < 12 + meta_len:
        raise CheckpointError("truncated checkpoint: metadata cut short")
    try:
        meta = json.loads(raw[12:12 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt metadata: {exc}") from exc

    encoder_specs = [LayerSpec.from_dict(d) for d in meta["architecture"]["encoder"]]
    decoder_specs = [LayerSpec.from_dict(d) for d in meta["architecture"]["decoder"]]
    precision = meta["precision"]
    wire = np.dtype("<f4" if precision == 32 else "<f8")
    dtype = np.float32 if precision == 32 else np.float64

    from .diffnet.layers import parameter_shapes
    expected = {}
    for name, shape in parameter_shapes(encoder_specs, tuple(meta["input_shape"])).items():
        expected["enc." + name] = shape
    for name, shape in parameter_shapes(decoder_specs, (meta["latent_dim"],)).items():
        expected["dec." + name] = shape

    offset = 12 + meta_len
    enc, dec = ParameterSet(), ParameterSet()
    for entry in meta["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in expected:
            raise CheckpointError(f"unexpected tensor {name} in checkpoint")
        if shape != expected[name]:
            raise CheckpointError(
                f"shape mismatch for {name}: file has {shape}, architecture needs {expected[name]}")
        nbytes = int(np.prod(shape)) * wire.itemsize
        if offset + nbytes > len(raw):
            raise CheckpointError(f"truncated checkpoint: tensor {name} cut short")
        arr = np.frombuffer(raw, dtype=wire, count=int(np.prod(shape)),
                            offset=offset).reshape(shape).astype(dtype, copy=True)
        offset += nbytes
        side, rest = name.split(".", 1)
        (enc if side == "enc" else dec)[rest] = arr
    missing = set(expected) - {e["name"] for e in meta["tensors"]}
    if missing:
        raise CheckpointError(f"checkpoint missing tensors: {sorted(missing)}")

    model = VaeModel(encoder_specs, decoder_specs, enc, dec,
                     meta["latent_dim"], tuple(meta["input_shape"]))
    history = _history_from_meta(meta.get("history"))
    return model, history


def checkpoint_metadata(path):
    """The raw JSON metadata block, without loading tensors."""
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12 or header[:4] != CHECKPOINT_MAGIC:
            raise CheckpointError("bad magic")
        meta_len = struct.unpack("<I", header[8:12])[0]
        blob = fh.read(meta_len)
    if len(blob) < meta_len:
        raise CheckpointError("truncated checkpoint: metadata cut short")
    return json.loads(blob.decode("utf-8"))
