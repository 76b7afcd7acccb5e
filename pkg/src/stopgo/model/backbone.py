"""Visual encoders: a tiny five-stage CNN over rasters, or precomputed vectors.

The CNN mirrors the structure the three visual variants need:

* ``cb`` / ``cc``: a square crop runs through five conv+relu+pool stages
  (``size / 32`` spatial output).
* ``rc``: the whole frame runs through stages 1-4 (no pooling in stage 1, so
  stride 8), a RoI-align of the enlarged context square is taken, and stage 5
  runs at stride 1 on the aligned grid.

A trailing 3x3 convolution reduces channels and the result is flattened.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..autograd import Conv3x3, Module, Tensor, ops
from ..errors import ConfigError, DataError
from ..schema import BBox, PedestrianTrack
from .crops import CROP_SIZE, FULL_FRAME, Augmentation, context_square, crop_box, crop_context, resize_frame

log = logging.getLogger(__name__)

VARIANTS = ("cb", "cc", "rc")
RC_STRIDE = 8


class TinyBackbone(Module):
    def __init__(self, rng: np.random.Generator, channels: Sequence[int] = (8, 8, 16, 16, 16)):
        if len(channels) != 5:
            raise ConfigError("backbone needs 5 stage widths")
        widths = (3,) + tuple(channels)
        self.stages = [Conv3x3(widths[i], widths[i + 1], rng) for i in range(5)]
        self.out_channels = widths[-1]

    def crop_forward(self, x: Tensor) -> Tensor:
        for stage in self.stages:
            x = ops.max_pool2d(ops.relu(stage(x)))
        return x

    def stem_forward(self, x: Tensor) -> Tensor:
        """Stages 1-4 on a full frame, output stride 8."""
        x = ops.relu(self.stages[0](x))
        for stage in self.stages[1:4]:
            x = ops.max_pool2d(ops.relu(stage(x)))
        return x

    def last_stage(self, x: Tensor) -> Tensor:
        return ops.relu(self.stages[4](x))


@dataclass(frozen=True)
class FrameRef:
    """One pedestrian observation to encode: image file, frame index, box."""

    images: str
    frame_index: int
    box: BBox


class ImageStore:
    """Lazily opened per-clip raster arrays ``[n_frames, C, H, W]`` (uint8 or float)."""

    def __init__(self):
        self._open = {}

    def frame(self, path: str, index: int) -> np.ndarray:
        arr = self._open.get(path)
        if arr is None:
            arr = self._open[path] = np.load(path, mmap_mode="r")
        if not 0 <= index < len(arr):
            raise DataError(f"{path}: frame {index} outside [0, {len(arr)})")
        img = np.asarray(arr[index], dtype=np.float64)
        return img / 255.0 if arr.dtype == np.uint8 else img


class FeatureStore:
    """Per-track precomputed visual vectors, one row per track observation.

    A ``.npy`` file holds one ``[n_obs, D]`` array; a ``.npz`` file holds one
    array per visual variant (``cb``, ``cc``, ``rc``).
    """

    def __init__(self, variant: str = "rc"):
        self.variant = variant
        self._cache = {}

    def array(self, path: str) -> np.ndarray:
        arr = self._cache.get(path)
        if arr is None:
            if path.endswith(".npz"):
                with np.load(path) as z:
                    if self.variant not in z:
                        raise DataError(f"{path}: no features for visual variant {self.variant!r}")
                    arr = np.asarray(z[self.variant], dtype=np.float64)
            else:
                arr = np.asarray(np.load(path), dtype=np.float64)
            if arr.ndim != 2:
                raise DataError(f"{path}: feature array must be 2-D, got shape {arr.shape}")
            self._cache[path] = arr
        return arr

    def rows(self, path: str, rows: Sequence[int]) -> np.ndarray:
        arr = self.array(path)
        if max(rows) >= len(arr):
            raise DataError(f"{path}: feature file has {len(arr)} rows, window needs row {max(rows)}")
        return arr[list(rows)]


def check_track_features(track: PedestrianTrack, variant: str = "rc") -> None:
    """Raise DataError unless the track's feature file has one row per observation."""
    if track.features is None:
        return
    n = len(FeatureStore(variant).array(track.features))
    if n != len(track):
        raise DataError(f"{track.features}: {n} feature rows for {len(track)} frames of track {track.track_id!r}")


class VisualEncoder(Module):
    """Backbone plus the channel-reducing convolution for one visual variant."""

    def __init__(self, variant: str, rng: np.random.Generator, channels=(8, 8, 16, 16, 16),
                 reduce_channels: int = 4, crop_size: int = CROP_SIZE, full_frame=FULL_FRAME,
                 roi_output: int = 7, context_mode: str = "height"):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown visual variant {variant!r}")
        if variant != "rc" and (crop_size < 32 or crop_size % 32):
            raise ConfigError(f"crop_size must be a positive multiple of 32, got {crop_size}")
        self.variant = variant
        self.crop_size = crop_size
        self.full_frame = tuple(full_frame)
        self.roi_output = roi_output
        self.context_mode = context_mode
        self.backbone = TinyBackbone(rng, channels)
        self.reduce = Conv3x3(self.backbone.out_channels, reduce_channels, rng)
        self.spatial = roi_output if variant == "rc" else crop_size // 32
        self.out_dim = reduce_channels * self.spatial ** 2

    @property
    def map_shape(self) -> tuple[int, int, int]:
        return (self.backbone.out_channels, self.spatial, self.spatial)

    def _patch(self, image, box):
        if self.variant == "cb":
            return crop_box(image, box, self.crop_size)
        return crop_context(image, box, self.crop_size, self.context_mode)

    def backbone_maps(self, refs: Sequence[FrameRef], store: ImageStore,
                      augment: Optional[Augmentation] = None,
                      rng: Optional[np.random.Generator] = None) -> Tensor:
        """Backbone output ``[len(refs), C, s, s]``; one stem pass per distinct frame for ``rc``."""
        groups: dict[tuple[str, int], list[int]] = {}
        for k, ref in enumerate(refs):
            groups.setdefault((ref.images, ref.frame_index), []).append(k)
        frames = {}
        for key, members in groups.items():
            image = store.frame(*key)
            boxes = [refs[k].box for k in members]
            if augment is not None:
                image, boxes = augment(image, boxes, rng)
            if self.variant == "rc" or augment is not None:
                image, boxes = resize_frame(image, boxes, self.full_frame)
            frames[key] = (image, boxes)

        if self.variant != "rc":
            patches = np.empty((len(refs), 3, self.crop_size, self.crop_size))
            for key, members in groups.items():
                image, boxes = frames[key]
                for k, box in zip(members, boxes):
                    patches[k] = self._patch(image, box)
            return self.backbone.crop_forward(Tensor(patches))

        regions: list[Optional[Tensor]] = [None] * len(refs)
        size = (self.roi_output, self.roi_output)
        for key, members in groups.items():
            image, boxes = frames[key]
            stem = self.backbone.stem_forward(Tensor(image[None]))
            fmap = ops.reshape(stem, stem.shape[1:])
            H, W = image.shape[1:]
            for k, box in zip(members, boxes):
                x0, y0, side = context_square(box, self.context_mode)
                if x0 >= W or y0 >= H or x0 + side <= 0 or y0 + side <= 0:
                    log.warning("roi for frame %s lies outside the image; using zero features", key)
                    regions[k] = None
                    continue
                roi = (x0, y0, x0 + side, y0 + side)
                aligned = ops.roi_align(fmap, roi, size, 2, 1.0 / RC_STRIDE)
                regions[k] = ops.reshape(aligned, (1,) + aligned.shape)
        present = [r for r in regions if r is not None]
        if not present:
            return Tensor(np.zeros((len(refs),) + self.map_shape))
        out = self.backbone.last_stage(ops.concat(present, axis=0))
        if len(present) == len(refs):
            return out
        # splice zero maps back in for rois that missed the frame
        pieces, j = [], 0
        for r in regions:
            if r is None:
                pieces.append(Tensor(np.zeros((1,) + self.map_shape)))
            else:
                pieces.append(ops.slice_axis(out, 0, j, j + 1))
                j += 1
        return ops.concat(pieces, axis=0)

    def encode(self, maps: Tensor) -> Tensor:
        """Reduce and flatten backbone maps to ``[N, out_dim]``."""
        return ops.flatten(self.reduce(maps))
