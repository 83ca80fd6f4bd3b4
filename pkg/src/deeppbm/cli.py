"""Command-line front end.

Subcommands: train, subtract, rpca, eval, generate, synth. Every option can
also come from a flat `key = value` config file; command-line flags win over
config values, which win over built-in defaults. Progress and diagnostics go
to stderr; machine-readable output goes to stdout or files.

Exit codes: 0 success, 2 usage/validation error, 1 runtime failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, pipeline, rpca, video_io
from .training import (TrainConfig, TrainingDiverged, checkpoint_metadata,
                       load_checkpoint, save_checkpoint, train)
from .vae import decode, encode

# every key a config file may define, with its parser
_KEY_PARSERS = {
    "input": str, "out": str, "model": str, "out_masks": str,
    "out_backgrounds": str, "masks": str, "gt": str, "report": str,
    "latent_dim": int, "epochs": int, "batch_size": int, "lr": float,
    "seed": int, "shuffle": lambda v: _parse_bool(v), "precision": int,
    "checkpoint_every": int, "resize": str, "grayscale": lambda v: _parse_bool(v),
    "threshold": float, "channel_rule": str, "long_video": float,
    "lambda": float, "tol": float, "max_iter": int,
    "num": int, "perturb": str, "scale": float,
    "frames": int, "size": str, "rect_size": str, "velocity": str,
    "background": str, "park_frames": int, "contrast": float,
}


class CliError(Exception):
    """Usage/validation problem; maps to exit code 2."""


def _parse_bool(value):
    if isinstance(value, bool):
        return value
    lowered = str(value).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise CliError(f"not a boolean: {value!r}")


def _parse_size(value, what="size"):
    try:
        w, h = str(value).lower().split("x")
        return int(h), int(w)  # WxH on the command line, (H, W) internally
    except ValueError as exc:
        raise CliError(f"bad {what} {value!r}, expected WxH") from exc


def _parse_pair(value, what):
    try:
        a, b = str(value).split(",")
        return int(a), int(b)
    except ValueError as exc:
        raise CliError(f"bad {what} {value!r}, expected two comma-separated integers") from exc


def load_config_file(path):
    """Flat `key = value` text; unknown keys are errors."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise CliError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip().replace("-", "_")
        raw = raw.strip()
        if key not in _KEY_PARSERS:
            raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _KEY_PARSERS[key](raw)
        except (TypeError, ValueError) as exc:
            raise CliError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


class Options:
    """Flag > config file > default, per key."""

    def __init__(self, args, config):
        self._args = vars(args)
        self._config = config

    def get(self, key, default=None):
        flag = self._args.get(key)
        if flag is not None:
            return flag
        if key in self._config:
            return self._config[key]
        return default

    def require(self, key, flag_name):
        value = self.get(key)
        if value is None:
            raise CliError(f"missing required option {flag_name}")
        return value


def _options(args):
    config = load_config_file(args.config) if args.config else {}
    return Options(args, config)


def _log(message):
    print(message, file=sys.stderr)


def _load_frames(opts):
    input_dir = opts.require("input", "--input")
    resize = opts.get("resize")
    if isinstance(resize, str):
        resize = _parse_size(resize, "resize")
    grayscale = bool(opts.get("grayscale", False))
    return video_io.load_frame_sequence(input_dir, resize=resize, grayscale=grayscale), resize, grayscale


def cmd_train(args):
    opts = _options(args)
    frames, resize, grayscale = _load_frames(opts)
    out = opts.require("out", "--out")
    config = TrainConfig(
        latent_dim=int(opts.get("latent_dim", 16)),
        batch_size=int(opts.get("batch_size", 140)),
        epochs=int(opts.get("epochs", 200)),
        learning_rate=float(opts.get("lr", 1e-3)),
        seed=int(opts.get("seed", 0)),
        shuffle=bool(opts.get("shuffle", True)),
        precision=int(opts.get("precision", 32)),
        checkpoint_every=int(opts.get("checkpoint_every", 0)),
    )
    try:
        config.validate()
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    _log(f"training on {frames.num_frames} frames {frames.frame_shape}, "
         f"d={config.latent_dim}, batch={config.batch_size}, epochs={config.epochs}")

    def on_epoch(epoch, stats, seconds):
        print(f"epoch {epoch} total {stats.total:.6f} recon "
              f"{stats.reconstruction_l1:.6f} kl {stats.kl:.6f}")
        sys.stdout.flush()

    model, history = train(frames, config, on_epoch=on_epoch,
                           checkpoint_path=out if config.checkpoint_every else None)
    meta = dict(vars(config))
    meta["resize"] = list(resize) if resize else None
    meta["grayscale"] = grayscale
    save_checkpoint(model, history, out, train_config=meta)
    _log(f"wrote checkpoint {out}")
    return 0


def _subtract_config(opts):
    config = pipeline.SubtractConfig(
        threshold=float(opts.get("threshold", 0.1)),
        channel_rule=str(opts.get("channel_rule", "max-channel")),
        long_video_fraction=float(opts.get("long_video", 0.2)),
    )
    try:
        config.validate()
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    return config


def _write_outputs(seq, opts):
    out_masks = opts.require("out_masks", "--out-masks")
    bg_dir = opts.get("out_backgrounds")
    video_io.write_mask_sequence(seq, out_masks, background_dir=bg_dir)
    _log(f"wrote {seq.num_frames} masks to {out_masks}"
         + (f", backgrounds to {bg_dir}" if bg_dir else ""))


def cmd_subtract(args):
    opts = _options(args)
    subtract = _subtract_config(opts)
    model_path = opts.get("model")
    if model_path:
        meta = checkpoint_metadata(model_path)
        io_meta = meta.get("train_config") or {}
        resize = io_meta.get("resize")
        frames = video_io.load_frame_sequence(
            opts.require("input", "--input"),
            resize=tuple(resize) if resize else None,
            grayscale=bool(io_meta.get("grayscale", False)))
        model, _ = load_checkpoint(model_path)
        if frames.frame_shape != model.input_shape:
            raise ValueError(f"shape mismatch: checkpoint expects {model.input_shape}, "
                             f"frames are {frames.frame_shape}")
        seq = pipeline.run_deeppbm(frames, model=model, subtract_config=subtract)
    elif args.long_video is not None:
        frames, _, _ = _load_frames(opts)
        config = TrainConfig(
            latent_dim=int(opts.get("latent_dim", 16)),
            batch_size=int(opts.get("batch_size", 140)),
            epochs=int(opts.get("epochs", 200)),
            learning_rate=float(opts.get("lr", 1e-3)),
            seed=int(opts.get("seed", 0)),
        )
        n_train = int(subtract.long_video_fraction * frames.num_frames)
        _log(f"no model given: training on leading {n_train} frames "
             f"({subtract.long_video_fraction:.0%})")
        seq = pipeline.run_long_video(frames, config, subtract_config=subtract)
    else:
        raise CliError("need --model, or --long-video to train on the leading fraction")
    _write_outputs(seq, opts)
    return 0


def cmd_rpca(args):
    opts = _options(args)
    subtract = _subtract_config(opts)
    frames, _, _ = _load_frames(opts)
    obs = rpca.ObservationMatrix.from_frames(frames)
    result = rpca.rpca_decompose(
        obs,
        lam=opts.get("lambda"),
        tol=float(opts.get("tol", 1e-7)),
        max_iter=int(opts.get("max_iter", 500)),
    )
    _log(f"rpca: lambda={result.lambda_used:.6g} iterations={result.iterations} "
         f"rank={result.rank} residual={result.residual:.3e}")
    if not result.converged:
        _log(f"warning: not converged after {result.iterations} iterations "
             f"(residual {result.residual:.3e})")
    backgrounds = pipeline.rpca_backgrounds(frames, result)
    masks = pipeline.extract_mask(frames.data, backgrounds.data, subtract)
    seq = pipeline.MaskSequence(masks=masks, backgrounds=backgrounds,
                                threshold=subtract.threshold, method="rpca",
                                frame_index_offset=frames.frame_index_offset)
    _write_outputs(seq, opts)
    return 0


def cmd_eval(args):
    opts = _options(args)
    mask_files = video_io.load_mask_files(opts.require("masks", "--masks"))
    gt_files = video_io.load_mask_files(opts.require("gt", "--gt"))
    common = sorted(set(mask_files) & set(gt_files))
    if not common:
        raise CliError("no overlapping frame indices between masks and ground truth")
    report = evaluation.evaluate_pairs(
        [(i, mask_files[i], gt_files[i]) for i in common])
    report_path = opts.get("report")
    if report_path:
        Path(report_path).write_text(report.to_json(), encoding="utf-8")
        _log(f"wrote report {report_path}")
    _log(f"evaluated {report.frames} labeled frames")
    print(f"f_measure {report.f_measure:.6f}")
    return 0


def cmd_generate(args):
    opts = _options(args)
    model, _ = load_checkpoint(opts.require("model", "--model"))
    out = Path(opts.require("out", "--out"))
    count = int(opts.get("num", 1))
    seed = int(opts.get("seed", 0))
    if count < 1:
        raise CliError("--num must be >= 1")
    perturb = opts.get("perturb")
    if perturb:
        from PIL import Image
        with Image.open(perturb) as img:
            if img.mode not in ("L", "RGB"):
                img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.float32) / 255.0
        arr = arr[None, :, :] if arr.ndim == 2 else arr.transpose(2, 0, 1)
        if arr.shape != model.input_shape:
            raise ValueError(f"shape mismatch: checkpoint expects {model.input_shape}, "
                             f"frame is {arr.shape}")
        images = pipeline.generate_background(
            model, mode="perturb", seed=seed, frame=arr,
            scale=float(opts.get("scale", 1.0)), count=count)
    else:
        images = pipeline.generate_background(model, mode="prior-sample",
                                              seed=seed, count=count)
    video_io.write_frame_sequence(images, out, prefix="gen_")
    _log(f"wrote {count} generated backgrounds to {out}")
    return 0


def cmd_synth(args):
    opts = _options(args)
    out = Path(opts.require("out", "--out"))
    size = opts.get("size", "64x64")
    rect = opts.get("rect_size", "8x8")
    velocity = opts.get("velocity", "1,0")
    try:
        spec = video_io.SyntheticSceneSpec(
            frames=int(opts.get("frames", 100)),
            size=_parse_size(size) if isinstance(size, str) else size,
            background_kind=str(opts.get("background", "static")),
            rect_size=_parse_size(rect, "rect size") if isinstance(rect, str) else rect,
            velocity=_parse_pair(velocity, "velocity") if isinstance(velocity, str) else velocity,
            seed=int(opts.get("seed", 0)),
            contrast=float(opts.get("contrast", 0.4)),
            park_frames=int(opts.get("park_frames", 0)),
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    frames, truth = video_io.generate_synthetic_scene(spec)
    video_io.write_frame_sequence(frames, out / "frames")
    video_io.write_mask_files(truth.masks, out / "gt", prefix="gt_")
    _log(f"wrote {spec.frames} frames and ground-truth masks under {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="deeppbm",
        description="Probabilistic background modeling and subtraction for "
                    "fixed-camera image sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("train", help="fit a background model to a frame directory")
    add_common(p)
    p.add_argument("--input", required=True, help="directory of frames")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--latent-dim", dest="latent_dim", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--resize", default=None, help="WxH")
    p.add_argument("--grayscale", action="store_true", default=None)
    p.add_argument("--no-shuffle", dest="shuffle", action="store_false", default=None)
    p.add_argument("--precision", type=int, choices=(32, 64), default=None)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("subtract", help="extract masks with a trained model")
    add_common(p)
    p.add_argument("--model", default=None, help="checkpoint from `train`")
    p.add_argument("--input", required=True)
    p.add_argument("--out-masks", dest="out_masks", required=True)
    p.add_argument("--out-backgrounds", dest="out_backgrounds", default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--channel-rule", dest="channel_rule",
                   choices=("max-channel", "luma"), default=None)
    p.add_argument("--long-video", dest="long_video", type=float, default=None,
                   help="train on this leading fraction when no --model is given")
    p.add_argument("--latent-dim", dest="latent_dim", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--resize", default=None)
    p.add_argument("--grayscale", action="store_true", default=None)
    p.set_defaults(func=cmd_subtract)

    p = sub.add_parser("rpca", help="principal-component-pursuit baseline")
    add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out-masks", dest="out_masks", required=True)
    p.add_argument("--out-backgrounds", dest="out_backgrounds", default=None)
    p.add_argument("--lambda", dest="lambda", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--channel-rule", dest="channel_rule",
                   choices=("max-channel", "luma"), default=None)
    p.add_argument("--resize", default=None)
    p.add_argument("--grayscale", action="store_true", default=None)
    p.set_defaults(func=cmd_rpca)

    p = sub.add_parser("eval", help="score masks against ground truth")
    add_common(p)
    p.add_argument("--masks", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", default=None, help="write JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", help="sample synthetic scene backgrounds")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--num", type=int, default=None)
    p.add_argument("--perturb", default=None, help="frame image to perturb around")
    p.add_argument("--scale", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("synth", help="write a synthetic test scene with ground truth")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--size", default=None, help="WxH")
    p.add_argument("--rect-size", dest="rect_size", default=None, help="WxH")
    p.add_argument("--velocity", default=None, help="vx,vy pixels/frame")
    p.add_argument("--background", choices=("static", "sinusoidal-illumination"),
                   default=None)
    p.add_argument("--park-frames", dest="park_frames", type=int, default=None)
    p.add_argument("--contrast", type=float, default=None)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        _log(f"error: {exc}")
        return 2
    except (ValueError, OSError, TrainingDiverged) as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
