import numpy as np
import pytest
from PIL import Image

from deeppbm.pipeline import MaskSequence
from deeppbm.video_io import (FrameTensor, SyntheticSceneSpec,
                              generate_synthetic_scene, load_frame_sequence,
                              load_mask_files, resize_bilinear,
                              write_frame_sequence, write_mask_files,
                              write_mask_sequence)


def _write_png(path, array):
    if array.ndim == 2:
        Image.fromarray(array, mode="L").save(path)
    else:
        Image.fromarray(array, mode="RGB").save(path)


def test_load_shape_contract(tmp_path):
    rgb = np.full((64, 64, 3), 10, dtype=np.uint8)
    for i in range(3):
        _write_png(tmp_path / f"f{i}.png", rgb)
    frames = load_frame_sequence(tmp_path)
    assert frames.data.shape == (3, 3, 64, 64)


def test_byte_normalization(tmp_path):
    img = np.zeros((8, 8), dtype=np.uint8)
    img[0, 0] = 255
    img[0, 1] = 128
    _write_png(tmp_path / "a.png", img)
    frames = load_frame_sequence(tmp_path)
    assert frames.data[0, 0, 0, 0] == 1.0
    assert frames.data[0, 0, 0, 1] == np.float32(128 / 255)
    assert frames.data[0, 0, 1, 0] == 0.0


def test_mixed_dimensions_error(tmp_path):
    _write_png(tmp_path / "a.png", np.zeros((64, 64), dtype=np.uint8))
    _write_png(tmp_path / "b.png", np.zeros((32, 32), dtype=np.uint8))
    with pytest.raises(ValueError, match="mixed dimensions"):
        load_frame_sequence(tmp_path)
    frames = load_frame_sequence(tmp_path, resize=(16, 16))
    assert frames.data.shape == (2, 1, 16, 16)


def test_empty_directory_error(tmp_path):
    with pytest.raises(ValueError, match="no frame images"):
        load_frame_sequence(tmp_path)


def test_undecodable_file_error(tmp_path):
    (tmp_path / "bad.png").write_bytes(b"not a png at all")
    with pytest.raises(ValueError, match="undecodable"):
        load_frame_sequence(tmp_path)


def test_lexicographic_order_not_creation_order(tmp_path):
    # create files out of name order; loading must follow names
    values = {"c.png": 30, "a.png": 10, "b.png": 20}
    for name in ("c.png", "a.png", "b.png"):
        _write_png(tmp_path / name, np.full((8, 8), values[name], dtype=np.uint8))
    frames = load_frame_sequence(tmp_path)
    got = [int(round(float(frames.data[i, 0, 0, 0]) * 255)) for i in range(3)]
    assert got == [10, 20, 30]


def test_png_round_trip_within_quantization(tmp_path):
    rng = np.random.default_rng(0)
    original = FrameTensor(rng.uniform(0, 1, (4, 3, 16, 16)).astype(np.float32))
    write_frame_sequence(original, tmp_path)
    reloaded = load_frame_sequence(tmp_path)
    assert reloaded.data.shape == original.data.shape
    assert np.abs(reloaded.data - original.data).max() <= 1 / 255 + 1e-7


def test_grayscale_luma_weights(tmp_path):
    rgb = np.zeros((8, 8, 3), dtype=np.uint8)
    rgb[:, :, 0] = 100
    rgb[:, :, 1] = 50
    rgb[:, :, 2] = 200
    _write_png(tmp_path / "a.png", rgb)
    frames = load_frame_sequence(tmp_path, grayscale=True)
    expected = (0.299 * 100 + 0.587 * 50 + 0.114 * 200) / 255
    assert frames.data.shape == (1, 1, 8, 8)
    assert abs(float(frames.data[0, 0, 0, 0]) - expected) < 1e-6


def test_resize_corner_aligned_is_interpolation():
    img = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
    out = resize_bilinear(img, 7, 7)
    # corners are preserved exactly under corner alignment
    assert out[0, 0, 0] == img[0, 0, 0]
    assert out[0, -1, -1] == img[0, -1, -1]
    assert out.min() >= img.min() and out.max() <= img.max()


def test_frame_tensor_invariants():
    with pytest.raises(ValueError):
        FrameTensor(np.full((1, 2, 16, 16), 0.5, dtype=np.float32))  # C=2
    with pytest.raises(ValueError):
        FrameTensor(np.full((1, 1, 4, 16), 0.5, dtype=np.float32))  # H<8
    with pytest.raises(ValueError):
        FrameTensor(np.full((1, 1, 16, 16), 1.5, dtype=np.float32))  # out of range
    with pytest.raises(ValueError):
        FrameTensor(np.full((1, 1, 16, 16), np.nan, dtype=np.float32))


def _mask_seq(masks, offset=0):
    return MaskSequence(masks=masks, backgrounds=None, threshold=0.1,
                        method="deeppbm", frame_index_offset=offset)


def test_mask_png_bytes(tmp_path):
    masks = np.zeros((2, 8, 8), dtype=np.uint8)
    masks[1] = 1
    write_mask_sequence(_mask_seq(masks), tmp_path)
    zero = np.asarray(Image.open(tmp_path / "mask_000000.png"))
    one = np.asarray(Image.open(tmp_path / "mask_000001.png"))
    assert (zero == 0).all() and (one == 255).all()


def test_mask_filename_offset(tmp_path):
    masks = np.zeros((8, 8, 8), dtype=np.uint8)
    write_mask_sequence(_mask_seq(masks, offset=5), tmp_path)
    # frame 7 of a sequence starting at 5 lands at index 12
    assert (tmp_path / "mask_000012.png").exists()
    assert not (tmp_path / "mask_000000.png").exists()


def test_mask_background_writing(tmp_path):
    masks = np.zeros((2, 8, 8), dtype=np.uint8)
    bg = FrameTensor(np.full((2, 1, 8, 8), 0.5, dtype=np.float32))
    seq = MaskSequence(masks=masks, backgrounds=bg, threshold=0.1, method="deeppbm")
    write_mask_sequence(seq, tmp_path / "m", background_dir=tmp_path / "b")
    arr = np.asarray(Image.open(tmp_path / "b" / "bg_000000.png"))
    assert (arr == round(0.5 * 255)).all()


def test_load_mask_files_index_parse(tmp_path):
    write_mask_files(np.ones((2, 8, 8), dtype=np.uint8), tmp_path, offset=3, prefix="gt_")
    loaded = load_mask_files(tmp_path)
    assert sorted(loaded) == [3, 4]
    assert loaded[3].dtype == bool and loaded[3].all()


def test_synthetic_scene_deterministic():
    spec = SyntheticSceneSpec(frames=20, size=(64, 64), rect_size=(8, 8),
                              velocity=(1, 0), seed=7)
    f1, t1 = generate_synthetic_scene(spec)
    f2, t2 = generate_synthetic_scene(spec)
    assert (f1.data == f2.data).all()
    assert (t1.masks == t2.masks).all()


def test_synthetic_scene_wraparound():
    spec = SyntheticSceneSpec(frames=70, size=(64, 64), rect_size=(8, 8),
                              velocity=(1, 0), seed=7)
    _, truth = generate_synthetic_scene(spec)
    # with vx=1 the rectangle returns to its position after W=64 frames
    assert (truth.masks[3] == truth.masks[3 + 64]).all()
    assert (truth.masks[0] != truth.masks[32]).any()


def test_synthetic_scene_mask_area():
    spec = SyntheticSceneSpec(frames=10, size=(64, 64), rect_size=(8, 8),
                              velocity=(3, 2), seed=1)
    _, truth = generate_synthetic_scene(spec)
    assert (truth.masks.sum(axis=(1, 2)) == 64).all()
    assert truth.labeled_indices == set(range(10))


def test_synthetic_scene_exact_contrast():
    # same scene at two contrasts: only footprint pixels differ, and exactly
    # by the contrast delta, so frame = background + contrast * mask
    kwargs = dict(frames=12, size=(64, 64), rect_size=(6, 9), velocity=(2, 1),
                  seed=9, background_kind="sinusoidal-illumination")
    hi, truth = generate_synthetic_scene(SyntheticSceneSpec(contrast=0.4, **kwargs))
    lo, _ = generate_synthetic_scene(SyntheticSceneSpec(contrast=0.2, **kwargs))
    fg = truth.masks.astype(bool)
    delta = (hi.data - lo.data)[:, 0]
    assert np.allclose(delta[fg], 0.2, atol=1e-6)
    assert np.allclose(delta[~fg], 0.0, atol=1e-6)


def test_synthetic_scene_park_frames():
    spec = SyntheticSceneSpec(frames=20, size=(64, 64), rect_size=(8, 8),
                              velocity=(2, 0), seed=4, park_frames=5)
    _, truth = generate_synthetic_scene(spec)
    for t in range(5):
        assert (truth.masks[t] == truth.masks[0]).all()
    assert (truth.masks[6] != truth.masks[0]).any()


def test_scene_spec_validation():
    with pytest.raises(ValueError, match="velocity"):
        SyntheticSceneSpec(frames=5, velocity=(0, 0))
    with pytest.raises(ValueError, match="fit"):
        SyntheticSceneSpec(frames=5, size=(32, 32), rect_size=(40, 4))
    with pytest.raises(ValueError, match="background"):
        SyntheticSceneSpec(frames=5, background_kind="plasma")
