"""Stop/go transition detection, pedestrian categories and time-to-event tags."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .schema import MotionState, PedestrianTrack

MIN_STATE_SECONDS = 0.5


class EventKind(enum.Enum):
    GO = "go"
    STOP = "stop"

    @property
    def pre_state(self) -> MotionState:
        return MotionState.STANDING if self is EventKind.GO else MotionState.WALKING

    @property
    def post_state(self) -> MotionState:
        return self.pre_state.flipped()

    @classmethod
    def parse(cls, value) -> "EventKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


class Category(enum.Enum):
    WALK = "walk"
    STAND = "stand"
    STOP = "stop"
    GO = "go"


@dataclass(frozen=True)
class TransitionEvent:
    kind: EventKind
    frame_index: int
    pre_state_duration: float
    post_state_duration: float
    valid: bool
    position: int = 0  # observation index of frame_index within the track


@dataclass(frozen=True)
class TTETag:
    frame_index: int
    tte: Optional[float]
    next_event: Optional[TransitionEvent] = None


def _runs(states: Sequence[MotionState]) -> list[tuple[MotionState, int, int]]:
    """(state, start position, length) for each maximal constant run."""
    runs = []
    start = 0
    for i in range(1, len(states) + 1):
        if i == len(states) or states[i] != states[start]:
            runs.append((states[start], start, i - start))
            start = i
    return runs


def _long_enough(run_frames: int, fps: float) -> bool:
    return run_frames / fps >= MIN_STATE_SECONDS


def detect_transitions(track: PedestrianTrack) -> list[TransitionEvent]:
    """One event per state change, in frame order.

    Durations are raw run lengths between changes; an invalid neighbour does
    not merge runs. Runs touching the track ends are truncated there.
    """
    runs = _runs(track.states)
    events = []
    for (prev_state, _, prev_len), (state, start, length) in zip(runs, runs[1:]):
        kind = EventKind.GO if state is MotionState.WALKING else EventKind.STOP
        events.append(TransitionEvent(
            kind=kind,
            frame_index=track.observations[start].frame_index,
            pre_state_duration=prev_len / track.fps,
            post_state_duration=length / track.fps,
            valid=_long_enough(prev_len, track.fps) and _long_enough(length, track.fps),
            position=start,
        ))
    return events


def categorize(track: PedestrianTrack, events: Sequence[TransitionEvent]) -> frozenset[Category]:
    kinds = {e.kind for e in events if e.valid}
    if kinds:
        return frozenset(Category.GO if k is EventKind.GO else Category.STOP for k in kinds)
    walking = sum(s is MotionState.WALKING for s in track.states)
    # mixed tracks without valid events go to the majority state, ties to Stand
    if walking > len(track) - walking:
        return frozenset({Category.WALK})
    return frozenset({Category.STAND})


def tag_tte(track: PedestrianTrack, events: Sequence[TransitionEvent], kind) -> list[TTETag]:
    """Tag every frame with seconds until the next valid event of ``kind``."""
    kind = EventKind.parse(kind)
    relevant = [e for e in events if e.valid and e.kind is kind]
    tags = []
    j = 0
    for obs in track.observations:
        while j < len(relevant) and relevant[j].frame_index < obs.frame_index:
            j += 1
        if j < len(relevant):
            ev = relevant[j]
            tags.append(TTETag(obs.frame_index, (ev.frame_index - obs.frame_index) / track.fps, ev))
        else:
            tags.append(TTETag(obs.frame_index, None, None))
    return tags


@dataclass
class StatsRow:
    name: str = "total"
    go: int = 0
    go_events: int = 0
    stop: int = 0
    stop_events: int = 0
    stand: int = 0
    walk: int = 0

    def as_dict(self) -> dict:
        return {"name": self.name, "go": self.go, "go_events": self.go_events, "stop": self.stop,
                "stop_events": self.stop_events, "stand": self.stand, "walk": self.walk}

    def __add__(self, other: "StatsRow") -> "StatsRow":
        return StatsRow(self.name, self.go + other.go, self.go_events + other.go_events,
                        self.stop + other.stop, self.stop_events + other.stop_events,
                        self.stand + other.stand, self.walk + other.walk)


def dataset_stats(tracks: Iterable[PedestrianTrack], name: str = "total") -> StatsRow:
    """Unique pedestrians per category plus valid event counts per kind."""
    row = StatsRow(name)
    for track in tracks:
        events = detect_transitions(track)
        cats = categorize(track, events)
        row.go += Category.GO in cats
        row.stop += Category.STOP in cats
        row.stand += Category.STAND in cats
        row.walk += Category.WALK in cats
        row.go_events += sum(e.valid and e.kind is EventKind.GO for e in events)
        row.stop_events += sum(e.valid and e.kind is EventKind.STOP for e in events)
    return row


def format_stats(rows: Sequence[StatsRow]) -> str:
    """Aligned text table: Go [events], Stop [events], Stand, Walk."""
    header = ["Dataset", "Go [events]", "Stop [events]", "Stand", "Walk"]
    body = [[r.name, f"{r.go:,} [{r.go_events:,}]", f"{r.stop:,} [{r.stop_events:,}]",
             f"{r.stand:,}", f"{r.walk:,}"] for r in rows]
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
    lines = []
    for line in [header] + body:
        cells = [line[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(line[1:], widths[1:])]
        lines.append("  ".join(cells))
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)
