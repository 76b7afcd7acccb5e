from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from stopgo.schema import BBox, BehaviorFlags, FrameObservation, MotionState, PedestrianTrack

S, W = MotionState.STANDING, MotionState.WALKING


def states_from(code: str) -> list[MotionState]:
    """``"SSWW"`` -> [STANDING, STANDING, WALKING, WALKING]."""
    return [S if c == "S" else W for c in code]


def make_track(states, fps=10.0, width=40.0, track_id="t0", clip_id="c0", dx=0.0,
               behavior=True, scene=None, start=0, widths=None) -> PedestrianTrack:
    if isinstance(states, str):
        states = states_from(states)
    obs = []
    for i, st in enumerate(states):
        w = widths[i] if widths is not None else width
        beh = BehaviorFlags(int(st is W), 0, 0, 0) if behavior else None
        obs.append(FrameObservation(start + i, BBox(100.0 + dx * i, 200.0, w, 2 * w), st, beh))
    return PedestrianTrack(track_id, clip_id, fps, tuple(obs), scene)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def fixture_split(out, recipe="separable", seed=0, sample_spec=None, **options):
    """Generate a fixture and return ``{SplitName: [Sample]}``."""
    from stopgo.bench.fixtures import gen_fixtures
    from stopgo.dataset import SampleSpec, build_samples
    from stopgo.ingest import ingest, load_splits
    from stopgo.schema import SplitName
    gen_fixtures(recipe, seed, out, **options)
    tracks = ingest(Path(out) / "tracks.jsonl")
    splits = load_splits(Path(out) / "splits.json")
    spec = sample_spec or SampleSpec()
    return {n: build_samples(tracks, spec, splits[n]) for n in SplitName}


ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
