"""Canonical annotation types for pedestrian tracks.

Everything downstream (transition extraction, windowing, features) consumes
these immutable records. Source layouts are adapted into them by
:mod:`stopgo.ingest`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

MAX_LANES = 16


class MotionState(enum.Enum):
    STANDING = "stand"
    WALKING = "walk"

    @classmethod
    def parse(cls, label: str) -> "MotionState":
        """Map a source motion label to a state; running counts as walking."""
        key = label.strip().lower()
        if key in _WALKING_LABELS:
            return cls.WALKING
        if key in _STANDING_LABELS:
            return cls.STANDING
        raise ValueError(f"unknown motion label {label!r}")

    def flipped(self) -> "MotionState":
        return MotionState.WALKING if self is MotionState.STANDING else MotionState.STANDING


_WALKING_LABELS = {"walk", "walking", "run", "running", "jog", "jogging", "w", "1"}
_STANDING_LABELS = {"stand", "standing", "standing still", "s", "0"}


@dataclass(frozen=True)
class BBox:
    """Center-based box in pixels."""

    x_center: float
    y_center: float
    width: float
    height: float

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BBox":
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    def corners(self) -> tuple[float, float, float, float]:
        hw, hh = self.width / 2.0, self.height / 2.0
        return (self.x_center - hw, self.y_center - hh, self.x_center + hw, self.y_center + hh)

    def as_list(self) -> list[float]:
        return [self.x_center, self.y_center, self.width, self.height]

    def is_valid(self) -> bool:
        vals = self.as_list()
        return all(math.isfinite(v) for v in vals) and self.width > 0 and self.height > 0

    def shifted(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x_center + dx, self.y_center + dy, self.width, self.height)


@dataclass(frozen=True)
class BehaviorFlags:
    walk: int
    look: int
    nod: int
    hand_gesture: int

    def as_list(self) -> list[int]:
        return [self.walk, self.look, self.nod, self.hand_gesture]


@dataclass(frozen=True)
class SceneAttributes:
    num_lanes: int
    intersection: int
    designated: int
    signalized: int
    traffic_direction: int
    motion_direction: int

    def as_list(self) -> list[int]:
        return [self.num_lanes, self.intersection, self.designated, self.signalized,
                self.traffic_direction, self.motion_direction]

    @classmethod
    def from_list(cls, values: Sequence[int]) -> "SceneAttributes":
        if len(values) != 6:
            raise ValueError(f"scene needs 6 values, got {len(values)}")
        return cls(*(int(v) for v in values))

    def problems(self) -> list[str]:
        out = []
        if not 0 <= self.num_lanes <= MAX_LANES:
            out.append(f"num_lanes {self.num_lanes} outside [0, {MAX_LANES}]")
        bits = self.as_list()[1:]
        if any(b not in (0, 1) for b in bits):
            out.append("scene flags must be bits")
        if (self.designated or self.signalized) and not self.intersection:
            out.append("designated/signalized crossing requires intersection = 1")
        return out


@dataclass(frozen=True)
class FrameObservation:
    frame_index: int
    box: BBox
    state: MotionState
    behavior: Optional[BehaviorFlags] = None


@dataclass(frozen=True)
class PedestrianTrack:
    track_id: str
    clip_id: str
    fps: float
    observations: tuple[FrameObservation, ...]
    scene: Optional[SceneAttributes] = None
    features: Optional[str] = None
    images: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.observations, tuple):
            object.__setattr__(self, "observations", tuple(self.observations))

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def states(self) -> list[MotionState]:
        return [o.state for o in self.observations]

    @property
    def frame_indices(self) -> list[int]:
        return [o.frame_index for o in self.observations]

    @property
    def has_behavior(self) -> bool:
        return all(o.behavior is not None for o in self.observations)


class SplitName(enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class DatasetSplit:
    name: SplitName
    clip_ids: frozenset[str] = field(default_factory=frozenset)

    def __contains__(self, track: PedestrianTrack) -> bool:
        return track.clip_id in self.clip_ids


def check_disjoint(splits: Sequence[DatasetSplit]) -> None:
    """Raise ValueError if any clip appears in two splits."""
    seen: dict[str, SplitName] = {}
    for split in splits:
        for clip in split.clip_ids:
            if clip in seen and seen[clip] != split.name:
                raise ValueError(f"clip {clip!r} in both {seen[clip].value} and {split.name.value}")
            seen[clip] = split.name


def validate_track(track: PedestrianTrack) -> list[str]:
    """Return every invariant violation found in ``track``; empty if well-formed."""
    report = []
    if not track.observations:
        report.append("track has no observations")
    if not (math.isfinite(track.fps) and track.fps > 0):
        report.append(f"fps must be positive, got {track.fps}")
    prev = None
    for pos, obs in enumerate(track.observations):
        if obs.frame_index < 0:
            report.append(f"negative frame index {obs.frame_index} at position {pos}")
        if prev is not None:
            if obs.frame_index <= prev:
                report.append(f"non-monotone frame index at position {pos}")
            elif obs.frame_index != prev + 1:
                report.append(f"frame gap between {prev} and {obs.frame_index} at position {pos}")
        prev = obs.frame_index
        if not obs.box.is_valid():
            report.append(f"invalid box {obs.box.as_list()} at frame {obs.frame_index}")
        if obs.behavior is not None:
            bits = obs.behavior.as_list()
            if any(b not in (0, 1) for b in bits):
                report.append(f"behavior flags must be bits at frame {obs.frame_index}")
            elif obs.behavior.walk != int(obs.state is MotionState.WALKING):
                report.append(
                    f"behavior walk bit {obs.behavior.walk} inconsistent with state "
                    f"{obs.state.value} at frame {obs.frame_index}")
    if track.scene is not None:
        report.extend(track.scene.problems())
    return report
