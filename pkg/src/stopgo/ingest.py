"""Read annotation files into canonical :class:`PedestrianTrack` records.

Four layouts are understood:

``unified``
    Canonical JSON Lines, one track per line (see :func:`track_to_record`).
``jaad-like``
    CVAT-style XML per clip with corner boxes and textual
    ``action``/``look``/``nod``/``hand_gesture`` attributes on every box, and an
    optional numeric ``<scene>`` element.
``pie-like``
    XML per clip with corner boxes, an ``id`` attribute per box, a combined
    ``gesture`` attribute, and coded per-pedestrian ``<ped_attributes>``.
``titan-like``
    CSV per clip (``frames,label,obj_track_id,top,left,height,width,
    attributes.Atomic Actions``) at 10 Hz, no behavior or scene attributes.

Records with unparseable values raise :class:`ParseError`. Tracks that parse but
are incomplete or violate an invariant are skipped; a diagnostic is logged
and, when a ``diagnostics`` list is given, appended to it.
"""
from __future__ import annotations

import csv
import errno
import json
import logging
import os
from pathlib import Path
from typing import Iterable, Optional
from xml.parsers import expat

from .errors import ConfigError, ParseError
from .schema import (
    BBox, BehaviorFlags, FrameObservation, MotionState, PedestrianTrack, SceneAttributes,
    validate_track,
)

log = logging.getLogger(__name__)

LAYOUTS = ("unified", "jaad-like", "pie-like", "titan-like")
_SUFFIX = {"unified": ".jsonl", "jaad-like": ".xml", "pie-like": ".xml", "titan-like": ".csv"}

TITAN_FPS = 10.0
TITAN_FRAME_STEP = 6  # 60 fps video annotated every 6th frame


class _Skip(Exception):
    """Internal: track is incomplete and should be dropped."""


def ingest(path, layout: str = "unified", diagnostics: Optional[list] = None,
           resolve_paths: bool = True) -> list[PedestrianTrack]:
    """Parse ``path`` (file or directory) written in ``layout``."""
    if layout not in LAYOUTS:
        raise ConfigError(f"unknown layout {layout!r}; expected one of {', '.join(LAYOUTS)}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(errno.ENOENT, "no such file or directory", str(path))
    files = sorted(path.glob(f"*{_SUFFIX[layout]}")) if path.is_dir() else [path]
    reader = _READERS[layout]
    tracks = []
    for f in files:
        for track in reader(f, _Diag(diagnostics)):
            if resolve_paths:
                track = _resolve(track, f.parent)
            tracks.append(track)
    return tracks


class _Diag:
    def __init__(self, sink):
        self.sink = sink

    def __call__(self, msg):
        log.warning(msg)
        if self.sink is not None:
            self.sink.append(msg)


def _resolve(track: PedestrianTrack, base: Path) -> PedestrianTrack:
    def fix(p):
        if p is None or os.path.isabs(p):
            return p
        return str((base / p).resolve())
    feats, imgs = fix(track.features), fix(track.images)
    if feats == track.features and imgs == track.images:
        return track
    return PedestrianTrack(track.track_id, track.clip_id, track.fps, track.observations,
                           track.scene, feats, imgs)


def _finish(track: PedestrianTrack, where: str, diag) -> Optional[PedestrianTrack]:
    obs = tuple(sorted(track.observations, key=lambda o: o.frame_index))
    track = PedestrianTrack(track.track_id, track.clip_id, track.fps, obs, track.scene,
                            track.features, track.images)
    problems = validate_track(track)
    if problems:
        diag(f"{where}: skipping track {track.track_id!r}: {'; '.join(problems)}")
        return None
    return track


# --- canonical JSONL -------------------------------------------------------

def track_to_record(track: PedestrianTrack) -> dict:
    rec = {
        "track_id": track.track_id,
        "clip_id": track.clip_id,
        "fps": track.fps,
        "scene": None if track.scene is None else {
            "num_lanes": track.scene.num_lanes,
            "intersection": track.scene.intersection,
            "designated": track.scene.designated,
            "signalized": track.scene.signalized,
            "traffic_direction": track.scene.traffic_direction,
            "motion_direction": track.scene.motion_direction,
        },
        "frames": [
            {"idx": o.frame_index, "box": o.box.as_list(), "state": o.state.value,
             "behavior": None if o.behavior is None else o.behavior.as_list()}
            for o in track.observations
        ],
        "features": track.features,
    }
    if track.images is not None:
        rec["images"] = track.images
    return rec


def export_tracks(tracks: Iterable[PedestrianTrack], path) -> None:
    with open(path, "w") as fh:
        for t in tracks:
            fh.write(json.dumps(track_to_record(t), sort_keys=True) + "\n")


def _number(value, path, line, fieldname, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        try:
            value = kind(value)
        except (TypeError, ValueError):
            raise ParseError(path, line, fieldname, f"expected a number, got {value!r}") from None
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ParseError(path, line, fieldname, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def record_to_track(rec: dict, path="<record>", line: int = 0) -> PedestrianTrack:
    """Build a track from a canonical record; raises ParseError or _Skip."""
    for key in ("track_id", "clip_id", "fps", "frames"):
        if key not in rec or rec[key] is None:
            raise _Skip(f"missing field {key!r}")
    fps = _number(rec["fps"], path, line, "fps")
    scene = None
    if rec.get("scene") is not None:
        s = rec["scene"]
        if not isinstance(s, dict):
            raise ParseError(path, line, "scene", "expected an object or null")
        keys = ("num_lanes", "intersection", "designated", "signalized",
                "traffic_direction", "motion_direction")
        missing = [k for k in keys if k not in s]
        if missing:
            raise _Skip(f"scene missing {missing}")
        scene = SceneAttributes(*(_number(s[k], path, line, f"scene.{k}", int) for k in keys))
    if not isinstance(rec["frames"], list):
        raise ParseError(path, line, "frames", "expected an array")
    obs = []
    for i, fr in enumerate(rec["frames"]):
        where = f"frames[{i}]"
        if not isinstance(fr, dict):
            raise ParseError(path, line, where, "expected an object")
        for key in ("idx", "box", "state"):
            if key not in fr:
                raise _Skip(f"{where} missing {key!r}")
        idx = _number(fr["idx"], path, line, f"{where}.idx", int)
        box = fr["box"]
        if not isinstance(box, list) or len(box) != 4:
            raise ParseError(path, line, f"{where}.box", "expected [cx, cy, w, h]")
        box = BBox(*(_number(v, path, line, f"{where}.box", float) for v in box))
        try:
            state = MotionState.parse(str(fr["state"]))
        except ValueError as exc:
            raise ParseError(path, line, f"{where}.state", str(exc)) from None
        beh = fr.get("behavior")
        if beh is not None:
            if not isinstance(beh, list) or len(beh) != 4:
                raise ParseError(path, line, f"{where}.behavior", "expected [walk, look, nod, hand]")
            beh = BehaviorFlags(*(_number(v, path, line, f"{where}.behavior", int) for v in beh))
        obs.append(FrameObservation(idx, box, state, beh))
    return PedestrianTrack(str(rec["track_id"]), str(rec["clip_id"]), fps, tuple(obs), scene,
                           rec.get("features"), rec.get("images"))


def _read_unified(path: Path, diag):
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, "json", exc.msg) from None
            if not isinstance(rec, dict):
                raise ParseError(path, line_no, "json", "expected an object per line")
            try:
                track = record_to_track(rec, path, line_no)
            except _Skip as exc:
                diag(f"{path}:{line_no}: skipping track: {exc}")
                continue
            track = _finish(track, f"{path}:{line_no}", diag)
            if track is not None:
                yield track


# --- XML helpers -----------------------------------------------------------

class _Node:
    __slots__ = ("tag", "attrib", "children", "text", "line")

    def __init__(self, tag, attrib, line):
        self.tag, self.attrib, self.line = tag, attrib, line
        self.children, self.text = [], ""

    def iter(self, tag):
        for c in self.children:
            if c.tag == tag:
                yield c
            yield from c.iter(tag)

    def find(self, tag):
        return next(self.iter(tag), None)


def _parse_xml(path: Path) -> _Node:
    parser = expat.ParserCreate()
    root = _Node("#document", {}, 0)
    stack = [root]

    def start(tag, attrs):
        node = _Node(tag, attrs, parser.CurrentLineNumber)
        stack[-1].children.append(node)
        stack.append(node)

    def end(tag):
        stack.pop()

    def chars(data):
        stack[-1].text += data

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    try:
        with open(path, "rb") as fh:
            parser.ParseFile(fh)
    except expat.ExpatError as exc:
        raise ParseError(path, exc.lineno, "xml", expat.errors.messages[exc.code]) from None
    return root


def _attr(node: _Node, name, path, kind=float):
    if name not in node.attrib:
        raise _Skip(f"line {node.line}: <{node.tag}> missing {name!r}")
    return _number(node.attrib[name], path, node.line, name, kind)


def _box_attributes(box: _Node) -> dict:
    return {a.attrib.get("name"): a.text.strip() for a in box.children if a.tag == "attribute"}


def _corner_box(node, path):
    x1, y1, x2, y2 = (_attr(node, k, path) for k in ("xtl", "ytl", "xbr", "ybr"))
    return BBox.from_corners(x1, y1, x2, y2)


def _state(value, path, line, fieldname):
    if value is None:
        raise _Skip(f"line {line}: missing {fieldname!r}")
    try:
        return MotionState.parse(value)
    except ValueError as exc:
        raise _Skip(f"line {line}: {exc}") from None


_UNDEFINED = {"", "__undefined__", "undefined", "none", "n/a", "0", "no"}


def _read_jaad(path: Path, diag):
    root = _parse_xml(path)
    meta = root.find("meta")
    if meta is None:
        raise ParseError(path, 1, "meta", "missing <meta clip=... fps=...>")
    clip = meta.attrib.get("clip", path.stem)
    fps = _number(meta.attrib.get("fps", "30"), path, meta.line, "fps")
    scene = None
    scene_node = root.find("scene")
    if scene_node is not None:
        keys = ("num_lanes", "intersection", "designated", "signalized",
                "traffic_direction", "motion_direction")
        try:
            scene = SceneAttributes(*(_attr(scene_node, k, path, int) for k in keys))
        except _Skip as exc:
            diag(f"{path}: ignoring incomplete scene: {exc}")
    for track_node in root.iter("track"):
        if track_node.attrib.get("label") not in ("pedestrian", "ped"):
            continue
        tid = track_node.attrib.get("id", f"{clip}_{track_node.line}")
        try:
            obs = []
            for box in track_node.iter("box"):
                attrs = _box_attributes(box)
                state = _state(attrs.get("action"), path, box.line, "action")
                beh = BehaviorFlags(
                    int(state is MotionState.WALKING),
                    int(attrs.get("look", "").lower() == "looking"),
                    int(attrs.get("nod", "").lower() == "nodding"),
                    int(attrs.get("hand_gesture", "").lower() not in _UNDEFINED),
                )
                obs.append(FrameObservation(_attr(box, "frame", path, int),
                                            _corner_box(box, path), state, beh))
        except _Skip as exc:
            diag(f"{path}: skipping track {tid!r}: {exc}")
            continue
        if not obs:
            diag(f"{path}: skipping track {tid!r}: no boxes")
            continue
        track = _finish(PedestrianTrack(tid, clip, fps, tuple(obs), scene), str(path), diag)
        if track is not None:
            yield track


_PIE_TRAFFIC = {"ow": 0, "one_way": 0, "tw": 1, "two_way": 1}
_PIE_MOTION = {"lat": 0, "long": 1}
_PIE_SIGNAL = {"n/a": (0, 0), "c": (1, 0), "s": (0, 1), "cs": (1, 1)}
_PIE_HAND = {"hand_ack", "hand_yield", "hand_rightofway", "other"}


def _pie_scene(node: _Node, path) -> SceneAttributes:
    a = node.attrib
    try:
        designated, signalized = _PIE_SIGNAL[a["signalized"].lower()]
        inter = a["intersection"].lower()
        intersection = 1 if inter in ("1", "yes", "true") else 0
        return SceneAttributes(
            _number(a["num_lanes"], path, node.line, "num_lanes", int), intersection,
            designated, signalized,
            _PIE_TRAFFIC[a["traffic_direction"].lower()], _PIE_MOTION[a["motion_direction"].lower()],
        )
    except KeyError as exc:
        raise ParseError(path, node.line, exc.args[0], "missing or unknown code") from None


def _read_pie(path: Path, diag):
    root = _parse_xml(path)
    ann = root.find("annotations")
    if ann is None:
        raise ParseError(path, 1, "annotations", "missing root element")
    clip = ann.attrib.get("clip", path.stem)
    fps = _number(ann.attrib.get("fps", "30"), path, ann.line, "fps")
    scenes = {n.attrib.get("id"): _pie_scene(n, path) for n in root.iter("ped_attributes")}
    for track_node in root.iter("track"):
        if track_node.attrib.get("label") != "pedestrian":
            continue
        tid = None
        try:
            obs = []
            for box in track_node.iter("box"):
                attrs = _box_attributes(box)
                if tid is None:
                    tid = attrs.get("id")
                    if not tid:
                        raise _Skip(f"line {box.line}: box without 'id' attribute")
                state = _state(attrs.get("action"), path, box.line, "action")
                gesture = attrs.get("gesture", "__undefined__").lower()
                beh = BehaviorFlags(int(state is MotionState.WALKING),
                                    int(attrs.get("look", "").lower() == "looking"),
                                    int(gesture == "nod"), int(gesture in _PIE_HAND))
                obs.append(FrameObservation(_attr(box, "frame", path, int),
                                            _corner_box(box, path), state, beh))
        except _Skip as exc:
            diag(f"{path}: skipping track {tid or track_node.line!r}: {exc}")
            continue
        if not obs:
            continue
        track = _finish(PedestrianTrack(tid, clip, fps, tuple(obs), scenes.get(tid)),
                        str(path), diag)
        if track is not None:
            yield track


def _read_titan(path: Path, diag):
    clip = path.stem
    rows: dict[str, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"frames", "label", "obj_track_id", "top", "left", "height", "width",
                    "attributes.Atomic Actions"}
        missing = required - set(reader.fieldnames or ())
        if missing:
            raise ParseError(path, 1, sorted(missing)[0], "missing column")
        for row in reader:
            line = reader.line_num
            if row["label"].strip().lower() != "person":
                continue
            stem = os.path.splitext(row["frames"].strip())[0]
            frame = _number(stem, path, line, "frames", int)
            if frame % TITAN_FRAME_STEP:
                raise ParseError(path, line, "frames", f"frame {frame} not on the 10 Hz grid")
            top, left, h, w = (_number(row[k], path, line, k) for k in ("top", "left", "height", "width"))
            box = BBox(left + w / 2.0, top + h / 2.0, w, h)
            rows.setdefault(row["obj_track_id"].strip(), []).append(
                (frame // TITAN_FRAME_STEP, box, row["attributes.Atomic Actions"], line))
    for tid, entries in rows.items():
        try:
            obs = [FrameObservation(idx, box, _state(act, path, line, "attributes.Atomic Actions"))
                   for idx, box, act, line in entries]
        except _Skip as exc:
            diag(f"{path}: skipping track {tid!r}: {exc}")
            continue
        track = _finish(PedestrianTrack(f"{clip}_{tid}", clip, TITAN_FPS, tuple(obs)), str(path), diag)
        if track is not None:
            yield track


_READERS = {"unified": _read_unified, "jaad-like": _read_jaad, "pie-like": _read_pie,
            "titan-like": _read_titan}


def load_splits(path) -> dict:
    """Read ``{"train": [...], "val": [...], "test": [...]}`` clip lists."""
    from .schema import DatasetSplit, SplitName, check_disjoint
    with open(path) as fh:
        raw = json.load(fh)
    splits = {}
    for name in SplitName:
        splits[name] = DatasetSplit(name, frozenset(raw.get(name.value, ())))
    check_disjoint(list(splits.values()))
    return splits


def save_splits(splits: dict, path) -> None:
    out = {name.value: sorted(split.clip_ids) for name, split in splits.items()}
    with open(path, "w") as fh:
        json.dump(out, fh, indent=1, sort_keys=True)
        fh.write("\n")


__all__ = ["ingest", "export_tracks", "track_to_record", "record_to_track", "load_splits",
           "save_splits", "LAYOUTS"]
