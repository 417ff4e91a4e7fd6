"""Person-centric frames, semantic-channel rasterisation and per-frame feature sequences.

Image features are eight semantic planes painted on a 24x42 grid over the
canvas and max-pooled to 12x21, flattened to 2016 values per frame:

    0  character of interest, body        4  occluders
    1  character of interest, gaze band   5  other objects
    2  other characters, bodies           6  proposition subject
    3  other characters, gaze bands       7  presence of the character of interest
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .scene import (
    CANVAS_HEIGHT,
    CANVAS_WIDTH,
    NUM_CHARACTERS,
    NUM_FRAMES,
    Box,
    CharacterInstance,
    Expression,
    Facing,
    Frame,
    Scene,
    Vec2,
    body_box,
)

CHANNELS = 8
RASTER_H, RASTER_W = 24, 42
GRID_H, GRID_W = 12, 21
IMAGE_DIM = CHANNELS * GRID_H * GRID_W
CELL_W = CANVAS_WIDTH / RASTER_W
CELL_H = CANVAS_HEIGHT / RASTER_H
CENTER = Vec2(CANVAS_WIDTH // 2, CANVAS_HEIGHT // 2)

_X_EDGES = np.arange(RASTER_W + 1) * CANVAS_WIDTH / RASTER_W
_Y_EDGES = np.arange(RASTER_H + 1) * CANVAS_HEIGHT / RASTER_H


class Variant(str, enum.Enum):
    STANDARD = "standard"
    CENTERED = "centered"
    FLIPPED = "flipped"
    REWIND = "rewind"


class BaselineKind(str, enum.Enum):
    TIME = "time"
    POSE = "pose"
    TIME_POSE = "time_pose"
    EXPRESSION = "expression"
    CHARACTER_ID = "character_id"
    PRESENT = "present"
    SINGLE_IMAGE = "single_image"


BASELINE_DIMS = {
    BaselineKind.TIME: 1,
    BaselineKind.POSE: 3,
    BaselineKind.TIME_POSE: 4,
    BaselineKind.EXPRESSION: 5,
    BaselineKind.CHARACTER_ID: NUM_CHARACTERS,
    BaselineKind.PRESENT: 2,
    BaselineKind.SINGLE_IMAGE: IMAGE_DIM,
}


@dataclass(frozen=True, eq=False)
class FeatureSeq:
    """T x D features for one (scene, character) pair.

    ``pad`` is the row the learner substitutes for frames outside the
    sequence; ``None`` means zeros.
    """
    frames: np.ndarray
    presence: tuple[bool, ...]
    variant: str = Variant.STANDARD.value
    pad: np.ndarray | None = None

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def D(self) -> int:
        return self.frames.shape[1]


# ------------------------------------------------------------ person-centric

def _mirror_char(ch: CharacterInstance, axis: float) -> CharacterInstance:
    if not ch.present:
        return ch
    return replace(ch, head=Vec2(2 * axis - ch.head.x, ch.head.y), facing=ch.facing.flipped())


def _translate_char(ch: CharacterInstance, dx: float, dy: float) -> CharacterInstance:
    if not ch.present:
        return ch
    return replace(ch, head=Vec2(ch.head.x + dx, ch.head.y + dy))


def person_centric(frame: Frame, cid: int) -> Frame:
    """Re-express ``frame`` around character ``cid``: its head at the canvas
    centre, facing left.  Entities pushed off the canvas are kept."""
    me = frame.characters[cid]
    if not me.present:
        raise ValueError(f"character {cid} is absent from frame {frame.index}")
    chars, objs = frame.characters, frame.objects
    hx, hy = me.head.x, me.head.y
    if me.facing is Facing.RIGHT:
        chars = tuple(_mirror_char(c, hx) for c in chars)
        objs = tuple(replace(o, position=Vec2(2 * hx - o.position.x, o.position.y),
                             bbox=o.bbox.mirrored(hx)) for o in objs)
    dx, dy = CENTER.x - hx, CENTER.y - hy
    chars = tuple(_translate_char(c, dx, dy) for c in chars)
    objs = tuple(replace(o, position=Vec2(o.position.x + dx, o.position.y + dy),
                         bbox=o.bbox.translated(dx, dy)) for o in objs)
    return Frame(frame.index, chars, objs)


# --------------------------------------------------------------- rasterising

def _coverage(box: Box) -> np.ndarray:
    """Fraction of every raster cell covered by ``box`` (clipped to the grid)."""
    ox = np.clip(np.minimum(box.x1, _X_EDGES[1:]) - np.maximum(box.x0, _X_EDGES[:-1]), 0, None) / CELL_W
    oy = np.clip(np.minimum(box.y1, _Y_EDGES[1:]) - np.maximum(box.y0, _Y_EDGES[:-1]), 0, None) / CELL_H
    return np.outer(oy, ox)


def gaze_box(ch: CharacterInstance) -> Box:
    """Three raster rows centred on the head row, from the head to the canvas
    edge on the facing side."""
    row = np.floor(ch.head.y / CELL_H)
    y0, y1 = (row - 1) * CELL_H, (row + 2) * CELL_H
    if ch.facing is Facing.LEFT:
        return Box(min(0.0, ch.head.x), y0, ch.head.x, y1)
    return Box(ch.head.x, y0, max(float(CANVAS_WIDTH), ch.head.x), y1)


def rasterize(frame: Frame, cid: int, subject: int | None = None) -> np.ndarray:
    """Paint the eight semantic channels at 24x42; values in [0, 1]."""
    grid = np.zeros((CHANNELS, RASTER_H, RASTER_W))
    me_present = frame.characters[cid].present
    for ch in frame.characters:
        if not ch.present:
            continue
        mine = ch.id == cid
        grid[0 if mine else 2] += _coverage(body_box(ch.head))
        grid[1 if mine else 3] += _coverage(gaze_box(ch))
    for obj in frame.objects:
        if obj.id == subject:
            grid[6] += _coverage(obj.bbox)
        elif obj.is_occluder:
            grid[4] += _coverage(obj.bbox)
        else:
            grid[5] += _coverage(obj.bbox)
    if me_present:
        grid[7] = 1.0
    return np.clip(grid, 0.0, 1.0, out=grid)


def downsample2(grid: np.ndarray) -> np.ndarray:
    """2x2 max-pool over the two trailing (spatial) axes."""
    c, h, w = grid.shape
    if h % 2 or w % 2:
        raise ValueError(f"spatial dims must be even, got {h}x{w}")
    return grid.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


# ------------------------------------------------------------------ sequences

def _appears(scene: Scene, cid: int) -> None:
    if not 0 <= cid < NUM_CHARACTERS or not any(f.characters[cid].present for f in scene.frames):
        raise ValueError(f"character {cid} does not appear in the scene")


def featurize_sequence(scene: Scene, cid: int, variant: Variant | str = Variant.STANDARD) -> FeatureSeq:
    variant = Variant(variant)
    _appears(scene, cid)
    subject = scene.proposition.subject
    out = np.zeros((len(scene.frames), IMAGE_DIM))
    presence = []
    for t, frame in enumerate(scene.frames):
        me = frame.characters[cid]
        presence.append(me.present)
        if not me.present:
            continue
        if variant is Variant.CENTERED:
            view = frame
        elif variant is Variant.FLIPPED:
            chars = list(frame.characters)
            chars[cid] = replace(me, facing=me.facing.flipped())
            view = person_centric(Frame(frame.index, tuple(chars), frame.objects), cid)
        else:
            view = person_centric(frame, cid)
        grid = rasterize(view, cid, subject)
        if variant is Variant.FLIPPED:
            grid[0:2] = 0.0
        out[t] = downsample2(grid).ravel()
    if variant is Variant.REWIND:
        out = out[::-1].copy()
        presence.reverse()
    return FeatureSeq(out, tuple(presence), variant.value)


_EXPR_INDEX = {e: i for i, e in enumerate(Expression)}


def baseline_features(scene: Scene, cid: int, kind: BaselineKind | str) -> FeatureSeq:
    try:
        kind = BaselineKind(kind)
    except ValueError:
        raise ValueError(f"unknown baseline kind {kind!r}") from None
    if kind is BaselineKind.SINGLE_IMAGE:
        return featurize_sequence(scene, cid, Variant.STANDARD)
    _appears(scene, cid)
    T = len(scene.frames)
    out = np.zeros((T, BASELINE_DIMS[kind]))
    presence = []
    for t, frame in enumerate(scene.frames):
        me = frame.characters[cid]
        presence.append(me.present)
        time = [t / (T - 1)]
        pose = ([me.head.x / CANVAS_WIDTH, me.head.y / CANVAS_HEIGHT, float(me.facing is Facing.RIGHT)]
                if me.present else [0.0, 0.0, 0.0])
        if kind is BaselineKind.TIME:
            out[t] = time
        elif kind is BaselineKind.POSE:
            out[t] = pose
        elif kind is BaselineKind.TIME_POSE:
            out[t] = time + pose
        elif kind is BaselineKind.EXPRESSION:
            if me.present:
                out[t, _EXPR_INDEX[me.expression]] = 1.0
        elif kind is BaselineKind.CHARACTER_ID:
            out[t, cid] = 1.0
        elif kind is BaselineKind.PRESENT:
            out[t, 0] = float(me.present)
    pad = np.array([0.0, 1.0]) if kind is BaselineKind.PRESENT else None
    return FeatureSeq(out, tuple(presence), kind.value, pad)


# ---------------------------------------------------------------------- cache

CACHE_MAGIC = b"MLFS"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_feature_cache(path: str | Path, seq: FeatureSeq) -> None:
    """Header (magic, version, T, D) then T*D little-endian float32, frame-major."""
    T, D = seq.frames.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, T, D))
        fh.write(np.ascontiguousarray(seq.frames, dtype="<f4").tobytes())


def read_feature_cache(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated feature cache header")
    magic, version, T, D = _HEADER.unpack_from(data)
    if magic != CACHE_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != CACHE_VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    body = data[_HEADER.size:]
    if len(body) != 4 * T * D:
        raise ValueError(f"{path}: expected {T * D} floats, found {len(body) // 4}")
    return np.frombuffer(body, dtype="<f4").reshape(T, D).astype(np.float64)


def featurize_many(scenes: Sequence[Scene], pairs: Sequence[tuple[int, int]],
                   kind: Variant | BaselineKind | str, dtype=np.float32) -> np.ndarray:
    """Stack features for (scene index, character) pairs into an (N, T, D) array."""
    if isinstance(kind, str) and not isinstance(kind, (Variant, BaselineKind)):
        kind = Variant(kind) if kind in Variant._value2member_map_ else BaselineKind(kind)
    first = True
    out = None
    for n, (si, cid) in enumerate(pairs):
        if isinstance(kind, Variant):
            seq = featurize_sequence(scenes[si], cid, kind)
        else:
            seq = baseline_features(scenes[si], cid, kind)
        if first:
            out = np.zeros((len(pairs),) + seq.frames.shape, dtype=dtype)
            first = False
        out[n] = seq.frames
    if out is None:
        dim = IMAGE_DIM if isinstance(kind, Variant) else BASELINE_DIMS[kind]
        out = np.zeros((0, NUM_FRAMES, dim), dtype=dtype)
    return out
