"""Per-sample numeric inputs: motion, behavior and scene vectors."""
from __future__ import annotations

import numpy as np

from ..dataset import Sample
from ..errors import ConfigError

MOTION_DIM = 8
BEHAVIOR_DIM = 4
SCENE_DIM = 6


def motion_features(sample: Sample) -> np.ndarray:
    """``[T, 8]`` rows of (x, y, w, h, dx, dy, dw, dh) with velocities in px/s.

    The first velocity is taken against ``sample.prev_box`` when the track had
    a preceding resampled frame and is zero otherwise.
    """
    pos = np.array([o.box.as_list() for o in sample.frames], dtype=np.float64)
    vel = np.zeros_like(pos)
    vel[1:] = (pos[1:] - pos[:-1]) * sample.sample_fps
    if sample.prev_box is not None:
        vel[0] = (pos[0] - np.array(sample.prev_box.as_list())) * sample.sample_fps
    return np.concatenate([pos, vel], axis=1)


def behavior_features(sample: Sample) -> np.ndarray:
    if any(o.behavior is None for o in sample.frames):
        raise ConfigError(f"modality 'B' requested but track {sample.track_id!r} has no behavior flags")
    return np.array([o.behavior.as_list() for o in sample.frames], dtype=np.float64)


def scene_features(sample: Sample) -> np.ndarray:
    if sample.scene is None:
        raise ConfigError(f"modality 'S' requested but track {sample.track_id!r} has no scene attributes")
    return np.array(sample.scene.as_list(), dtype=np.float64)


class Standardizer:
    """Per-dimension affine normalization fitted on training inputs."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    @classmethod
    def fit(cls, values: np.ndarray) -> "Standardizer":
        flat = values.reshape(-1, values.shape[-1])
        std = flat.std(axis=0)
        std[std < 1e-8] = 1.0
        return cls(flat.mean(axis=0), std)

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim))

    def __call__(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std
