"""Frame-sequence I/O and synthetic test scenes.

Videos are directories of image files (PNG or binary PPM/PGM), one frame per
file, ordered by filename. Masks are written as 8-bit grayscale PNGs with
0 = background and 255 = foreground.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Set, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
FRAME_EXTENSIONS = (".png", ".ppm", ".pgm")


@dataclass
class FrameTensor:
    """A batch of frames [N, C, H, W] with values in [0, 1]."""
    data: np.ndarray
    frame_index_offset: int = 0

    def __post_init__(self):
        d = self.data
        if d.ndim != 4:
            raise ValueError(f"frame tensor must be 4-axis [N,C,H,W], got {d.shape}")
        n, c, h, w = d.shape
        if n < 1 or c not in (1, 3) or h < 8 or w < 8:
            raise ValueError(f"invalid frame tensor shape {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("frame tensor contains non-finite values")
        lo, hi = float(d.min()), float(d.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"frame values outside [0,1]: min {lo}, max {hi}")

    @property
    def num_frames(self):
        return self.data.shape[0]

    @property
    def frame_shape(self):
        return self.data.shape[1:]


@dataclass
class GroundTruthMasks:
    """Binary masks [N, H, W]; labeled_indices are source-sequence indices."""
    masks: np.ndarray
    labeled_indices: Set[int] = field(default_factory=set)

    def __post_init__(self):
        if self.masks.ndim != 3:
            raise ValueError(f"masks must be [N,H,W], got {self.masks.shape}")
        vals = np.unique(self.masks)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        n = self.masks.shape[0]
        if any(i < 0 or i >= n for i in self.labeled_indices):
            raise ValueError("labeled index out of range")


@dataclass
class SyntheticSceneSpec:
    """Moving-rectangle scene over a smooth random background.

    The rectangle adds `contrast` on top of the background, so ground truth
    is exact: masked pixels differ from the background by contrast. Velocity
    is (vx, vy) pixels/frame with wraparound; `park_frames` holds the
    rectangle at its start position before it begins to move.
    """
    frames: int
    size: Tuple[int, int] = (64, 64)  # (H, W)
    background_kind: str = "static"   # or "sinusoidal-illumination"
    rect_size: Tuple[int, int] = (8, 8)
    velocity: Tuple[int, int] = (1, 0)
    seed: int = 0
    contrast: float = 0.4
    park_frames: int = 0

    def __post_init__(self):
        h, w = self.size
        rh, rw = self.rect_size
        if self.frames < 1:
            raise ValueError("need at least one frame")
        if self.background_kind not in ("static", "sinusoidal-illumination"):
            raise ValueError(f"unknown background kind {self.background_kind!r}")
        if rh < 1 or rw < 1 or rh > h or rw > w:
            raise ValueError("rectangle does not fit inside the frame")
        if self.velocity == (0, 0):
            raise ValueError("velocity must be nonzero")
        # background tops out at 0.55 * 1.08 under illumination; keep sums < 1
        if not 0.0 < self.contrast <= 0.4:
            raise ValueError("contrast must be in (0, 0.4]")


def list_frame_files(directory):
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir()
                   if p.is_file() and p.suffix.lower() in FRAME_EXTENSIONS)
    return files


def load_frame_sequence(directory, resize=None, grayscale=False):
    """Decode a directory of image files into a FrameTensor.

    Args:
        directory: path holding the frame images; lexicographic filename
            order is frame order.
        resize: optional (H, W) target; bilinear, corner-aligned.
        grayscale: reduce color frames with luma weights 0.299/0.587/0.114.

    Raises:
        ValueError: empty directory, undecodable file, or mixed frame
            dimensions without resize.
    """
    files = list_frame_files(directory)
    if not files:
        raise ValueError(f"no frame images (PNG/PPM/PGM) in {directory}")
    frames = []
    for path in files:
        try:
            with Image.open(path) as img:
                if img.mode not in ("L", "RGB"):
                    img = img.convert("RGB")
                arr = np.asarray(img, dtype=np.float32) / 255.0
        except (UnidentifiedImageError, OSError) as exc:
            raise ValueError(f"undecodable image file: {path}") from exc
        if arr.ndim == 2:
            arr = arr[None, :, :]
        else:
            arr = arr.transpose(2, 0, 1)  # HWC -> CHW, channel order R,G,B
        if grayscale and arr.shape[0] == 3:
            w = np.asarray(LUMA_WEIGHTS, dtype=np.float32)
            arr = np.tensordot(w, arr, axes=1)[None, :, :]
        if resize is not None:
            arr = resize_bilinear(arr, resize[0], resize[1])
        frames.append(arr)
    shapes = {f.shape for f in frames}
    if len(shapes) > 1:
        raise ValueError(f"mixed dimensions across frames: {sorted(shapes)}; pass resize")
    data = np.clip(np.stack(frames), 0.0, 1.0)
    return FrameTensor(data=data, frame_index_offset=0)


def resize_bilinear(img, out_h, out_w):
    """Corner-aligned bilinear resize of img [C, H, W]."""
    c, h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img
    ys = np.linspace(0.0, h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(img.dtype)
    wx = (xs - x0).astype(img.dtype)
    top = img[:, y0][:, :, x0] * (1 - wx) + img[:, y0][:, :, x1] * wx
    bot = img[:, y1][:, :, x0] * (1 - wx) + img[:, y1][:, :, x1] * wx
    return top * (1 - wy)[None, :, None] + bot * wy[None, :, None]


def _to_byte_image(values):
    return np.rint(np.asarray(values, dtype=np.float64) * 255.0).astype(np.uint8)


def write_frame_sequence(frames, out_dir, prefix="frame_"):
    """One PNG per frame, `<prefix>%06d.png`, bytes = round(255 * value)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = frames.data if isinstance(frames, FrameTensor) else np.asarray(frames)
    offset = frames.frame_index_offset if isinstance(frames, FrameTensor) else 0
    paths = []
    for i, frame in enumerate(data):
        arr = _to_byte_image(frame)
        img = Image.fromarray(arr[0], mode="L") if arr.shape[0] == 1 \
            else Image.fromarray(arr.transpose(1, 2, 0), mode="RGB")
        path = out_dir / f"{prefix}{offset + i:06d}.png"
        img.save(path)
        paths.append(path)
    return paths


def write_mask_files(masks, out_dir, offset=0, prefix="mask_"):
    """Binary masks [N, H, W] as 0/255 grayscale PNGs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, mask in enumerate(np.asarray(masks)):
        img = Image.fromarray((mask > 0).astype(np.uint8) * 255, mode="L")
        path = out_dir / f"{prefix}{offset + i:06d}.png"
        img.save(path)
        paths.append(path)
    return paths


def write_mask_sequence(masks, out_dir, background_dir=None):
    """Write a MaskSequence: masks as `mask_%06d.png`, and the background
    estimates as `bg_%06d.png` when background_dir is given."""
    offset = getattr(masks, "frame_index_offset", 0)
    paths = write_mask_files(masks.masks, out_dir, offset=offset)
    if background_dir is not None:
        if masks.backgrounds is None:
            raise ValueError("mask sequence has no background estimates")
        write_frame_sequence(masks.backgrounds, background_dir, prefix="bg_")
    return paths


def load_mask_files(directory):
    """Map of frame index -> boolean mask, parsed from `*_NNNNNN.png` names."""
    directory = Path(directory)
    out = {}
    for path in sorted(directory.iterdir()):
        if not (path.is_file() and path.suffix.lower() == ".png"):
            continue
        digits = "".join(ch for ch in path.stem if ch.isdigit())
        if not digits:
            continue
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"))
        out[int(digits)] = arr > 127
    if not out:
        raise ValueError(f"no indexed mask PNGs in {directory}")
    return out


def _smooth_background(rng, h, w, lo=0.2, hi=0.55, grid=5):
    coarse = rng.uniform(0.0, 1.0, size=(1, grid, grid))
    img = resize_bilinear(coarse, h, w)[0]
    span = img.max() - img.min()
    if span < 1e-9:
        return np.full((h, w), 0.5 * (lo + hi))
    return lo + (hi - lo) * (img - img.min()) / span


def generate_synthetic_scene(spec):
    """Deterministic scene per spec.seed; returns (FrameTensor, GroundTruthMasks)."""
    h, w = spec.size
    rh, rw = spec.rect_size
    vx, vy = spec.velocity
    rng = np.random.default_rng(spec.seed)
    base = _smooth_background(rng, h, w)
    y0 = int(rng.integers(0, h))
    x0 = int(rng.integers(0, w))

    frames = np.empty((spec.frames, 1, h, w), dtype=np.float64)
    masks = np.zeros((spec.frames, h, w), dtype=np.uint8)
    period = 40.0
    for t in range(spec.frames):
        if spec.background_kind == "sinusoidal-illumination":
            bg = base * (1.0 + 0.08 * math.sin(2.0 * math.pi * t / period))
        else:
            bg = base
        steps = max(0, t - spec.park_frames)
        ys = (y0 + vy * steps + np.arange(rh)) % h
        xs = (x0 + vx * steps + np.arange(rw)) % w
        mask = np.zeros((h, w), dtype=bool)
        mask[np.ix_(ys, xs)] = True
        frames[t, 0] = bg + spec.contrast * mask
        masks[t] = mask
    tensor = FrameTensor(data=frames.astype(np.float32), frame_index_offset=0)
    truth = GroundTruthMasks(masks=masks, labeled_indices=set(range(spec.frames)))
    return tensor, truth
