"""Fixed-length labeled observation windows and class balancing."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .extract import EventKind, detect_transitions, tag_tte
from .schema import (
    BBox, BehaviorFlags, DatasetSplit, FrameObservation, MotionState, PedestrianTrack,
    SceneAttributes,
)

_TOL = 1e-9


@dataclass(frozen=True)
class SampleSpec:
    task: EventKind = EventKind.GO
    T: int = 5
    horizon: float = 2.0
    sample_fps: float = 5.0
    min_box_width: float = 24.0
    stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "task", EventKind.parse(self.task))
        if int(self.T) != self.T or self.T < 1:
            raise ConfigError(f"T must be a positive integer, got {self.T}")
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if not self.sample_fps > 0:
            raise ConfigError(f"sample_fps must be positive, got {self.sample_fps}")
        if self.min_box_width < 0:
            raise ConfigError("min_box_width must be >= 0")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ConfigError(f"stride must be a positive integer, got {self.stride}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task"] = self.task.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SampleSpec":
        return cls(**d)


@dataclass(frozen=True)
class Sample:
    track_id: str
    clip_id: str
    task: EventKind
    frames: tuple[FrameObservation, ...]
    label: int
    last_tte: Optional[float]
    scene: Optional[SceneAttributes] = None
    prev_box: Optional[BBox] = None  # resampled frame just before the window, if any
    rows: tuple[int, ...] = ()  # observation positions in the source track
    sample_fps: float = 5.0
    features: Optional[str] = None
    images: Optional[str] = None

    @property
    def T(self) -> int:
        return len(self.frames)

    @property
    def key(self) -> tuple[str, int]:
        return (self.track_id, self.frames[-1].frame_index)

    def last(self, T: int) -> "Sample":
        """The same sample restricted to its final ``T`` frames."""
        if T > self.T:
            raise ConfigError(f"cannot take {T} frames from a window of {self.T}")
        if T == self.T:
            return self
        cut = self.T - T
        return Sample(self.track_id, self.clip_id, self.task, self.frames[cut:], self.label,
                      self.last_tte, self.scene, self.frames[cut - 1].box, self.rows[cut:],
                      self.sample_fps, self.features, self.images)


def decimation_factor(fps: float, sample_fps: float) -> int:
    ratio = fps / sample_fps
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-6:
        raise ConfigError(f"source fps {fps} is not an integer multiple of sample_fps {sample_fps}")
    return factor


def build_samples(tracks: Iterable[PedestrianTrack], spec: SampleSpec,
                  split: Optional[DatasetSplit] = None) -> list[Sample]:
    """Slide length-``T`` windows over each resampled track and label them.

    A window is kept when its last frame is in the task's pre-state, its last
    box is at least ``min_box_width`` wide, and it ends strictly before the
    track's last relevant event (tracks without one yield negatives).
    """
    samples = []
    task = spec.task
    for track in tracks:
        if split is not None and track.clip_id not in split.clip_ids:
            continue
        factor = decimation_factor(track.fps, spec.sample_fps)
        events = detect_transitions(track)
        tags = tag_tte(track, events, task)
        has_relevant = any(e.valid and e.kind is task for e in events)
        keep = list(range(0, len(track), factor))
        for end in range(spec.T - 1, len(keep), spec.stride):
            pos = keep[end]
            obs = track.observations[pos]
            tte = tags[pos].tte
            if tte is None and has_relevant:
                continue
            if tte is not None and tte <= 0:
                continue
            if obs.state is not task.pre_state:
                continue
            if obs.box.width < spec.min_box_width:
                continue
            label = int(tte is not None and tte <= spec.horizon + _TOL)
            window = keep[end - spec.T + 1:end + 1]
            prev = track.observations[keep[end - spec.T]].box if end - spec.T >= 0 else None
            samples.append(Sample(
                track_id=track.track_id, clip_id=track.clip_id, task=task,
                frames=tuple(track.observations[p] for p in window), label=label,
                last_tte=tte, scene=track.scene, prev_box=prev, rows=tuple(window),
                sample_fps=spec.sample_fps, features=track.features, images=track.images,
            ))
    return samples


def _balanced(samples: Sequence[Sample], seed, task: str, split: str) -> list[Sample]:
    pos = [s for s in samples if s.label == 1]
    neg = [s for s in samples if s.label == 0]
    if not pos or not neg:
        missing = "positive" if not pos else "negative"
        raise DataError(f"no {missing} samples for task {task!r} in split {split!r}")
    rng = np.random.default_rng(seed)
    if len(pos) > len(neg):
        pos = [pos[i] for i in sorted(rng.choice(len(pos), size=len(neg), replace=False))]
    elif len(neg) > len(pos):
        neg = [neg[i] for i in sorted(rng.choice(len(neg), size=len(pos), replace=False))]
    both = pos + neg
    return [both[i] for i in rng.permutation(len(both))]


def _task_name(samples):
    return samples[0].task.value if samples else "?"


def balance_training(samples: Sequence[Sample], seed, split: str = "train") -> list[Sample]:
    """Subsample the larger class to a 1:1 ratio, then shuffle; deterministic in ``seed``."""
    return _balanced(samples, seed, _task_name(samples), split)


def balanced_test_draw(samples: Sequence[Sample], seed, split: str = "test") -> list[Sample]:
    """One balanced evaluation draw (negatives usually subsampled)."""
    return _balanced(samples, seed, _task_name(samples), split)


def class_counts(samples: Sequence[Sample]) -> dict:
    pos = sum(s.label for s in samples)
    return {"positive": pos, "negative": len(samples) - pos}


# --- JSONL io -------------------------------------------------------------

def sample_to_record(s: Sample) -> dict:
    return {
        "track_id": s.track_id, "clip_id": s.clip_id, "task": s.task.value,
        "label": s.label, "last_tte": s.last_tte, "sample_fps": s.sample_fps,
        "scene": None if s.scene is None else s.scene.as_list(),
        "prev_box": None if s.prev_box is None else s.prev_box.as_list(),
        "rows": list(s.rows),
        "frames": [{"idx": o.frame_index, "box": o.box.as_list(), "state": o.state.value,
                    "behavior": None if o.behavior is None else o.behavior.as_list()}
                   for o in s.frames],
        "features": s.features, "images": s.images,
    }


def sample_from_record(rec: dict) -> Sample:
    frames = tuple(
        FrameObservation(f["idx"], BBox(*f["box"]), MotionState(f["state"]),
                         None if f["behavior"] is None else BehaviorFlags(*f["behavior"]))
        for f in rec["frames"])
    return Sample(
        track_id=rec["track_id"], clip_id=rec["clip_id"], task=EventKind(rec["task"]),
        frames=frames, label=int(rec["label"]), last_tte=rec["last_tte"],
        scene=None if rec["scene"] is None else SceneAttributes.from_list(rec["scene"]),
        prev_box=None if rec["prev_box"] is None else BBox(*rec["prev_box"]),
        rows=tuple(rec["rows"]), sample_fps=rec["sample_fps"],
        features=rec.get("features"), images=rec.get("images"),
    )


def _relocate(rec: dict, fn) -> dict:
    for key in ("features", "images"):
        if rec.get(key):
            rec[key] = fn(rec[key])
    return rec


def write_samples(samples: Iterable[Sample], path) -> None:
    """One JSON record per line; file references are stored relative to ``path``."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "w") as fh:
        for s in samples:
            rec = _relocate(sample_to_record(s), lambda p: os.path.relpath(os.path.abspath(p), base))
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_samples(path) -> list[Sample]:
    base = os.path.dirname(os.path.abspath(path))
    with open(path) as fh:
        return [sample_from_record(_relocate(json.loads(line), lambda p: os.path.normpath(os.path.join(base, p))))
                for line in fh if line.strip()]


__all__ = [
    "SampleSpec", "Sample", "build_samples", "balance_training", "balanced_test_draw",
    "class_counts", "decimation_factor", "write_samples", "read_samples",
    "sample_to_record", "sample_from_record",
]
