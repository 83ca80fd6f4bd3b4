"""Shared fixtures: the seeded benchmark scenes and models trained on them.

Training runs once per session; the pipeline tests and the acceptance
criteria all score the same artifacts.
"""

import numpy as np
import pytest

from deeppbm.pipeline import SubtractConfig, run_deeppbm, run_long_video
from deeppbm.training import TrainConfig, train
from deeppbm.video_io import SyntheticSceneSpec, generate_synthetic_scene

# the seeded moving-rectangle benchmark scene (100 frames, 64x64)
SCENE_SPEC = SyntheticSceneSpec(frames=100, size=(64, 64), background_kind="static",
                                rect_size=(8, 8), velocity=(2, 1), seed=7)
TRAIN_CFG = dict(latent_dim=4, batch_size=5, epochs=40, learning_rate=2e-3, seed=1)
SUBTRACT_CFG = dict(threshold=0.2)

# rectangle parked for the first 10 frames, then moving; trained on first 20%
PARKED_SPEC = SyntheticSceneSpec(frames=150, size=(64, 64), background_kind="static",
                                 rect_size=(8, 8), velocity=(2, 1), seed=11,
                                 park_frames=10)
PARKED_TRAIN_CFG = dict(latent_dim=4, batch_size=5, epochs=40, learning_rate=2e-3, seed=3)


@pytest.fixture(scope="session")
def synth_scene():
    return generate_synthetic_scene(SCENE_SPEC)


@pytest.fixture(scope="session")
def planted_background(synth_scene):
    frames, truth = synth_scene
    return frames.data[:, 0] - SCENE_SPEC.contrast * truth.masks


@pytest.fixture(scope="session")
def trained_model(synth_scene):
    frames, _ = synth_scene
    return train(frames, TrainConfig(**TRAIN_CFG))


@pytest.fixture(scope="session")
def deeppbm_masks(synth_scene, trained_model):
    frames, _ = synth_scene
    model, _ = trained_model
    return run_deeppbm(frames, model=model, subtract_config=SubtractConfig(**SUBTRACT_CFG))


@pytest.fixture(scope="session")
def parked_scene():
    return generate_synthetic_scene(PARKED_SPEC)


@pytest.fixture(scope="session")
def parked_masks(parked_scene):
    frames, _ = parked_scene
    return run_long_video(frames, TrainConfig(**PARKED_TRAIN_CFG),
                          subtract_config=SubtractConfig(threshold=0.2,
                                                         long_video_fraction=0.2))
