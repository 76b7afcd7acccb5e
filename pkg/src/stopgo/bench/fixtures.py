"""Synthetic track generators for desk-scale checks.

Recipes:

* ``random``: Markov motion states with random boxes, bits and scenes.
* ``separable``: one pedestrian per clip; the two seconds before a go carry
  look + hand bits and a growing drift, the two seconds before a stop carry
  look + nod bits and a deceleration. Per-frame visual vectors carry the same
  cue with variant-dependent strength.
* ``table1``: pedestrian population with prescribed category and event
  counts, written alongside a manifest of the planned counts.

Every recipe is deterministic in its seed and writes ``tracks.jsonl`` plus
``splits.json`` (and, where applicable, feature and raster files).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ConfigError
from ..ingest import export_tracks, save_splits
from ..schema import (
    BBox, BehaviorFlags, DatasetSplit, FrameObservation, MotionState, PedestrianTrack,
    SceneAttributes, SplitName, validate_track,
)

RECIPES = ("random", "separable", "table1")
FEATURE_DIM = 16
CUE_SECONDS = 2.0

STAND, WALK = MotionState.STANDING, MotionState.WALKING


def _random_scene(rng) -> SceneAttributes:
    intersection = int(rng.integers(2))
    return SceneAttributes(int(rng.integers(1, 5)), intersection,
                           intersection * int(rng.integers(2)), intersection * int(rng.integers(2)),
                           int(rng.integers(2)), int(rng.integers(2)))


def _splits(clip_ids: list[str], rng) -> dict:
    ids = [clip_ids[i] for i in rng.permutation(len(clip_ids))]
    a, b = int(round(0.6 * len(ids))), int(round(0.8 * len(ids)))
    parts = {SplitName.TRAIN: ids[:a], SplitName.VAL: ids[a:b], SplitName.TEST: ids[b:]}
    return {name: DatasetSplit(name, frozenset(p)) for name, p in parts.items()}


def _write(out: Path, tracks, splits, manifest: dict) -> dict:
    for t in tracks:
        problems = validate_track(t)
        if problems:
            raise AssertionError(f"generated track {t.track_id} is invalid: {problems}")
    export_tracks(tracks, out / "tracks.jsonl")
    save_splits(splits, out / "splits.json")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# -- (a) random ---------------------------------------------------------------

def _gen_random(out: Path, rng, n_tracks: int = 40, fps_choices=(5.0, 10.0, 30.0),
                switch_prob: float = 0.08, **_) -> dict:
    tracks = []
    for k in range(n_tracks):
        fps = float(rng.choice(fps_choices))
        n = int(rng.integers(10, 121))
        state = STAND if rng.random() < 0.5 else WALK
        x, y = rng.uniform(100, 1100), rng.uniform(150, 350)
        w = rng.uniform(24, 90)
        obs = []
        for i in range(n):
            if i and rng.random() < switch_prob:
                state = state.flipped()
            if state is WALK:
                x += rng.normal(30, 5) / fps
            x, y = x + rng.normal(0, 0.5), y + rng.normal(0, 0.5)
            bits = BehaviorFlags(int(state is WALK), int(rng.random() < 0.3),
                                 int(rng.random() < 0.1), int(rng.random() < 0.1))
            obs.append(FrameObservation(i, BBox(x, y, w, 2 * w), state, bits))
        tracks.append(PedestrianTrack(f"r{k:04d}", f"clip_{k:04d}", fps, tuple(obs), _random_scene(rng)))
    return _write(out, tracks, _splits([t.clip_id for t in tracks], rng),
                  {"recipe": "random", "tracks": len(tracks)})


# -- (b) separable ------------------------------------------------------------

@dataclass
class _Cue:
    tte_go: np.ndarray   # seconds to the next go, inf when none
    tte_stop: np.ndarray

    def go_zone(self):
        return (self.tte_go > 0) & (self.tte_go <= CUE_SECONDS + 1e-9)

    def stop_zone(self):
        return (self.tte_stop > 0) & (self.tte_stop <= CUE_SECONDS + 1e-9)


def _tte(n: int, fps: float, event: Optional[int]) -> np.ndarray:
    t = np.full(n, np.inf)
    if event is not None:
        t[:event] = (event - np.arange(event)) / fps
    return t


VARIANT_STRENGTH = {"cb": 0.35, "cc": 0.6, "rc": 0.9}


def _gen_separable(out: Path, rng, n_go: int = 90, n_stop: int = 90, n_stand: int = 50,
                   n_walk: int = 50, fps: float = 10.0, noise: float = 1.0,
                   frame_hw=(481, 1281), raster: bool = False, raster_hw=None, **_) -> dict:
    H, W = frame_hw
    kinds = ["go"] * n_go + ["stop"] * n_stop + ["stand"] * n_stand + ["walk"] * n_walk
    kinds = [kinds[i] for i in rng.permutation(len(kinds))]
    u_go = rng.normal(size=FEATURE_DIM)
    u_go /= np.linalg.norm(u_go)
    u_stop = rng.normal(size=FEATURE_DIM)
    u_stop -= u_stop @ u_go * u_go
    u_stop /= np.linalg.norm(u_stop)
    (out / "features").mkdir(exist_ok=True)
    if raster:
        (out / "images").mkdir(exist_ok=True)
    p_cue, p_base = (0.65, 0.1) if noise > 0 else (1.0, 0.0)
    jitter = 2.0 * noise * H / 481
    tracks = []
    for k, kind in enumerate(kinds):
        clip = f"clip_{k:04d}"
        long_run = int(round(rng.uniform(5.0, 8.0) * fps))
        short_run = int(round(rng.uniform(2.0, 4.0) * fps))
        if kind == "go":
            states = [STAND] * long_run + [WALK] * short_run
            event = long_run
        elif kind == "stop":
            states = [WALK] * long_run + [STAND] * short_run
            event = long_run
        else:
            states = [STAND if kind == "stand" else WALK] * (long_run + short_run)
            event = None
        n = len(states)
        cue = _Cue(_tte(n, fps, event if kind == "go" else None),
                   _tte(n, fps, event if kind == "stop" else None))
        go_zone, stop_zone = cue.go_zone(), cue.stop_zone()

        height = rng.uniform(0.25, 0.4) * H
        width = height / 2
        speed = rng.uniform(35.0, 60.0) * W / 1281 * rng.choice([-1.0, 1.0])
        x = rng.uniform(0.3, 0.7) * W
        y = rng.uniform(0.45, 0.6) * H
        obs, feats = [], {v: np.empty((n, FEATURE_DIM)) for v in VARIANT_STRENGTH}
        offset = rng.normal(0.0, 0.3 * noise, size=FEATURE_DIM)
        for i, state in enumerate(states):
            if state is WALK:
                v = speed
                if stop_zone[i]:
                    # decelerate towards 30% of walking speed at the event
                    v = speed * (0.3 + 0.7 * cue.tte_stop[i] / CUE_SECONDS)
            else:
                v = 0.0
                if go_zone[i]:
                    v = speed * 0.5 * (1.0 - cue.tte_go[i] / CUE_SECONDS)
            x += v / fps
            bx, by = x + rng.normal(0, jitter), y + rng.normal(0, jitter)
            p_look = p_cue if (go_zone[i] or stop_zone[i]) else p_base
            look = int(rng.random() < p_look)
            hand = int(rng.random() < (p_cue if go_zone[i] else p_base))
            nod = int(rng.random() < (p_cue if stop_zone[i] else p_base))
            obs.append(FrameObservation(i, BBox(bx, by, width, height), state,
                                        BehaviorFlags(int(state is WALK), look, nod, hand)))
            signal = go_zone[i] * u_go + stop_zone[i] * u_stop
            base = offset + noise * rng.normal(size=FEATURE_DIM)
            for variant, strength in VARIANT_STRENGTH.items():
                feats[variant][i] = base + strength * signal
        feat_path = out / "features" / f"{clip}.npz"
        np.savez(feat_path, **feats)
        images = None
        if raster:
            images = out / "images" / f"{clip}.npy"
            np.save(images, _render(obs, frame_hw, raster_hw or frame_hw))
        tracks.append(PedestrianTrack(f"{clip}_p0", clip, fps, tuple(obs), _random_scene(rng),
                                      features=str(feat_path.relative_to(out)),
                                      images=None if images is None else str(images.relative_to(out))))
    manifest = {"recipe": "separable", "tracks": len(tracks),
                "kinds": {k: kinds.count(k) for k in ("go", "stop", "stand", "walk")},
                "fps": fps, "noise": noise, "frame_hw": list(frame_hw), "raster": raster}
    return _write(out, tracks, _splits([t.clip_id for t in tracks], rng), manifest)


def _render(obs, frame_hw, raster_hw) -> np.ndarray:
    """Flat gray frames with the pedestrian as a colored block; the head lights up when looking."""
    H, W = raster_hw
    sy, sx = H / frame_hw[0], W / frame_hw[1]
    frames = np.full((len(obs), 3, H, W), 60, dtype=np.uint8)
    for i, o in enumerate(obs):
        x1, y1, x2, y2 = o.box.corners()
        c1, c2 = max(int(x1 * sx), 0), min(int(np.ceil(x2 * sx)), W)
        r1, r2 = max(int(y1 * sy), 0), min(int(np.ceil(y2 * sy)), H)
        frames[i, :, r1:r2, c1:c2] = np.array([40, 90, 160], dtype=np.uint8)[:, None, None]
        head = r1 + max((r2 - r1) // 4, 1)
        if o.behavior.look:
            frames[i, :, r1:head, c1:c2] = 230
        if o.behavior.hand_gesture:
            frames[i, 0, (r1 + r2) // 2:r2, c1:c2] = 250
    return frames


# -- (c) table1 ---------------------------------------------------------------

TABLE1_TARGET = {"go": 88, "go_events": 101, "stop": 100, "stop_events": 114, "stand": 184, "walk": 713}
# run patterns; L = long (>= 0.5 s) runs, "b" = sub-0.5 s blip
_PATTERNS = {
    "go": "S W",            # 1 go
    "stop": "W S",          # 1 stop
    "go2": "S W S W",       # 2 go, 1 stop
    "stop2": "W S W S",     # 1 go, 2 stop
    "stand": "S",
    "walk": "W",
    "stand_blip": "S Wb S",  # invalid go and stop, majority stand
    "walk_blip": "W Sb W",
}


def _table1_plan(target: dict) -> dict:
    """Counts per pattern so that categories and event totals hit ``target``."""
    go2 = target["go_events"] - target["go"]
    stop2 = target["stop_events"] - target["stop"]
    both = go2 + stop2
    if go2 < 0 or stop2 < 0 or target["go"] < both or target["stop"] < both:
        raise ConfigError(f"unreachable table1 target {target}")
    stand_blip, walk_blip = target["stand"] // 10, target["walk"] // 10
    return {"go": target["go"] - both, "stop": target["stop"] - both, "go2": go2, "stop2": stop2,
            "stand": target["stand"] - stand_blip, "stand_blip": stand_blip,
            "walk": target["walk"] - walk_blip, "walk_blip": walk_blip}


def _states_for(pattern: str, fps: float, rng) -> list[MotionState]:
    states = []
    for tok in pattern.split():
        state = STAND if tok[0] == "S" else WALK
        if tok.endswith("b"):
            n = int(rng.integers(1, int(np.ceil(0.5 * fps))))
        else:
            n = int(rng.integers(int(np.ceil(0.5 * fps)), int(3 * fps) + 1))
        states += [state] * n
    return states


def _gen_table1(out: Path, rng, fps: float = 10.0, target: Optional[dict] = None, **_) -> dict:
    target = dict(TABLE1_TARGET if target is None else target)
    plan = _table1_plan(target)
    names = [name for name in _PATTERNS for _ in range(plan.get(name, 0))]
    names = [names[i] for i in rng.permutation(len(names))]
    tracks = []
    for k, name in enumerate(names):
        states = _states_for(_PATTERNS[name], fps, rng)
        x, y, w = rng.uniform(100, 1100), rng.uniform(150, 350), rng.uniform(24, 90)
        obs = []
        for i, state in enumerate(states):
            x += (40.0 / fps if state is WALK else 0.0)
            obs.append(FrameObservation(i, BBox(x, y, w, 2 * w), state))
        clip = f"clip_{k // 4:04d}"
        tracks.append(PedestrianTrack(f"{clip}_p{k % 4}", clip, fps, tuple(obs)))
    clips = sorted({t.clip_id for t in tracks})
    return _write(out, tracks, _splits(clips, rng),
                  {"recipe": "table1", "tracks": len(tracks), "plan": plan, "expected": target})


_GENERATORS = {"random": _gen_random, "separable": _gen_separable, "table1": _gen_table1}


def gen_fixtures(recipe: str, seed: int, out_dir, **options) -> dict:
    """Generate a fixture directory; returns the manifest that was written."""
    if recipe not in _GENERATORS:
        raise ConfigError(f"unknown fixture recipe {recipe!r}; choose from {', '.join(RECIPES)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifest = _GENERATORS[recipe](out, rng, **options)
    return manifest
