"""Abstract-scene domain types, validation, JSON codec, interpolation and SVG rendering.

Scenes live on a fixed 700x400 canvas.  Every scene is a story of exactly
eight frames.  Each frame carries all twenty character slots (most of them
absent) and a handful of objects.  A latent proposition about one object is
tracked through the story, and the per-character "mistaken" labels say who
holds a wrong answer to it in which frame.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

CANVAS_WIDTH = 700
CANVAS_HEIGHT = 400
NUM_FRAMES = 8
NUM_CHARACTERS = 20
MAX_PRESENT = 4
SCHEMA_VERSION = "1"

# body glyph extents relative to the head anchor
BODY_HALF_WIDTH = 25
BODY_ABOVE_HEAD = 30
BODY_BELOW_HEAD = 130


class Facing(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"

    def flipped(self) -> "Facing":
        return Facing.RIGHT if self is Facing.LEFT else Facing.LEFT


class Expression(str, enum.Enum):
    NEUTRAL = "neutral"
    HAPPY = "happy"
    SAD = "sad"
    ANGRY = "angry"
    SURPRISED = "surprised"


class ObjectKind(str, enum.Enum):
    CHAIR = "chair"
    BALL = "ball"
    PIE = "pie"
    BIKE = "bike"
    DOG = "dog"
    CORN = "corn"
    BASKET = "basket"
    PAINTING = "painting"
    COUCH = "couch"
    TABLE = "table"
    BOX = "box"
    BUSH = "bush"


OCCLUDER_KINDS = frozenset({ObjectKind.COUCH, ObjectKind.TABLE, ObjectKind.BOX, ObjectKind.BUSH})


class Predicate(str, enum.Enum):
    AT_LOCATION = "at_location"
    EXISTS_VISIBLE = "exists_visible"


class TemplateKind(str, enum.Enum):
    OCCLUDED_CHANGE = "occluded_change"
    OUT_OF_FOV_CHANGE = "out_of_fov_change"
    ABSENCE_CHANGE = "absence_change"
    NO_MISTAKE = "no_mistake"


class SceneFormatError(ValueError):
    """A scene document could not be decoded."""


class InvalidSceneError(ValueError):
    """Raised when an operation requires a valid scene and got one that is not."""

    def __init__(self, violations: Sequence[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def in_canvas(self) -> bool:
        return 0 <= self.x <= CANVAS_WIDTH and 0 <= self.y <= CANVAS_HEIGHT


@dataclass(frozen=True)
class Box:
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, p: Vec2) -> bool:
        return self.x0 <= p.x <= self.x1 and self.y0 <= p.y <= self.y1

    def in_canvas(self) -> bool:
        return (0 <= self.x0 <= self.x1 <= CANVAS_WIDTH
                and 0 <= self.y0 <= self.y1 <= CANVAS_HEIGHT)

    def translated(self, dx: float, dy: float) -> "Box":
        return Box(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def mirrored(self, axis_x: float) -> "Box":
        return Box(2 * axis_x - self.x1, self.y0, 2 * axis_x - self.x0, self.y1)


def body_box(head: Vec2) -> Box:
    """Axis-aligned extent of a character's body glyph, anchored at the head."""
    return Box(head.x - BODY_HALF_WIDTH, head.y - BODY_ABOVE_HEAD,
               head.x + BODY_HALF_WIDTH, head.y + BODY_BELOW_HEAD)


@dataclass(frozen=True)
class CharacterInstance:
    id: int
    head: Vec2 = Vec2(0, 0)
    facing: Facing = Facing.LEFT
    expression: Expression = Expression.NEUTRAL
    present: bool = False

    @classmethod
    def absent(cls, cid: int) -> "CharacterInstance":
        return cls(cid)


@dataclass(frozen=True)
class SceneObject:
    id: int
    kind: ObjectKind
    position: Vec2
    bbox: Box
    is_occluder: bool
    state_tag: int


@dataclass(frozen=True)
class Frame:
    index: int
    characters: tuple[CharacterInstance, ...]
    objects: tuple[SceneObject, ...] = ()

    @classmethod
    def build(cls, index: int, present: Iterable[CharacterInstance] = (),
              objects: Iterable[SceneObject] = ()) -> "Frame":
        """Frame with all character slots filled; slots not in ``present`` are absent."""
        slots = [CharacterInstance.absent(c) for c in range(NUM_CHARACTERS)]
        for ch in present:
            slots[ch.id] = replace(ch, present=True)
        return cls(index, tuple(slots), tuple(objects))

    def character(self, cid: int) -> CharacterInstance:
        return self.characters[cid]

    def present_characters(self) -> list[CharacterInstance]:
        return [c for c in self.characters if c.present]

    def find_object(self, oid: int) -> SceneObject | None:
        for obj in self.objects:
            if obj.id == oid:
                return obj
        return None


@dataclass(frozen=True)
class Proposition:
    subject: int
    predicate: Predicate
    truth: tuple[bool, ...]


@dataclass(frozen=True)
class MistakenLabels:
    matrix: tuple[tuple[bool, ...], ...]
    any_frame: tuple[bool, ...] = field(default=())

    def __post_init__(self):
        if not self.any_frame:
            object.__setattr__(self, "any_frame", tuple(any(row) for row in self.matrix))

    @classmethod
    def all_false(cls) -> "MistakenLabels":
        return cls(tuple((False,) * NUM_FRAMES for _ in range(NUM_CHARACTERS)))

    def at(self, cid: int, t: int) -> bool:
        return self.matrix[cid][t]


@dataclass(frozen=True)
class Scene:
    frames: tuple[Frame, ...]
    proposition: Proposition
    labels: MistakenLabels
    seed: int
    template_kind: TemplateKind

    def characters_in_scene(self) -> list[int]:
        """Ids of characters present in at least one frame, ascending."""
        return [c for c in range(NUM_CHARACTERS)
                if any(f.characters[c].present for f in self.frames)]


def proposition_truth(frames: Sequence[Frame], subject: int, predicate: Predicate) -> tuple[bool, ...]:
    """True answer of the tracked proposition in every frame.

    ``at_location`` asks whether the subject still sits in the location slot it
    occupied when first shown; ``exists_visible`` asks whether it is in the scene.
    """
    if predicate is Predicate.EXISTS_VISIBLE:
        return tuple(f.find_object(subject) is not None for f in frames)
    reference = None
    for f in frames:
        obj = f.find_object(subject)
        if obj is not None:
            reference = obj.state_tag
            break
    out = []
    for f in frames:
        obj = f.find_object(subject)
        out.append(obj is not None and obj.state_tag == reference)
    return tuple(out)


def believed_answer(predicate: Predicate, believed_state: int, reference_state: int | None) -> bool:
    """Answer a character gives given the last state it saw the subject in."""
    if predicate is Predicate.EXISTS_VISIBLE:
        return True
    return believed_state == reference_state


def reference_state(frames: Sequence[Frame], subject: int) -> int | None:
    for f in frames:
        obj = f.find_object(subject)
        if obj is not None:
            return obj.state_tag
    return None


# ---------------------------------------------------------------- validation

def validate_scene(scene: Scene) -> list[str]:
    """Return every invariant violation found in ``scene``; empty means valid."""
    problems: list[str] = []
    frames = scene.frames
    if len(frames) != NUM_FRAMES:
        problems.append(f"frame count {len(frames)} ≠ {NUM_FRAMES}")
    for pos, frame in enumerate(frames):
        if frame.index != pos:
            problems.append(f"frame at position {pos} has index {frame.index}")
        problems.extend(_frame_violations(frame))

    prop = scene.proposition
    if len(prop.truth) != NUM_FRAMES:
        problems.append(f"proposition truth length {len(prop.truth)} ≠ {NUM_FRAMES}")
    elif len(frames) == NUM_FRAMES:
        if not any(f.find_object(prop.subject) is not None for f in frames):
            problems.append(f"proposition subject {prop.subject} never appears")
        elif tuple(prop.truth) != proposition_truth(frames, prop.subject, prop.predicate):
            problems.append("proposition truth inconsistent with frames")

    labels = scene.labels
    if len(labels.matrix) != NUM_CHARACTERS or any(len(r) != NUM_FRAMES for r in labels.matrix):
        problems.append("label matrix shape is not 20x8")
        return problems
    if tuple(labels.any_frame) != tuple(any(r) for r in labels.matrix):
        problems.append("any-frame aggregate differs from row OR")
    if len(frames) == NUM_FRAMES:
        for c in range(NUM_CHARACTERS):
            for t in range(NUM_FRAMES):
                if labels.matrix[c][t] and not frames[t].characters[c].present:
                    problems.append(f"label true for absent character {c} in frame {t}")
    return problems


def _frame_violations(frame: Frame) -> list[str]:
    problems = []
    t = frame.index
    if not 0 <= t < NUM_FRAMES:
        problems.append(f"frame index {t} out of range")
    if len(frame.characters) != NUM_CHARACTERS:
        problems.append(f"frame {t}: {len(frame.characters)} character slots ≠ {NUM_CHARACTERS}")
    for slot, ch in enumerate(frame.characters):
        if ch.id != slot:
            problems.append(f"frame {t}: slot {slot} holds character {ch.id}")
        if ch.present and not ch.head.in_canvas():
            problems.append(f"frame {t}: character {ch.id} head outside canvas")
    n_present = sum(ch.present for ch in frame.characters)
    if n_present > MAX_PRESENT:
        problems.append(f"frame {t}: {n_present} present characters > {MAX_PRESENT}")
    seen = set()
    for obj in frame.objects:
        if obj.id in seen:
            problems.append(f"frame {t}: duplicate object id {obj.id}")
        seen.add(obj.id)
        if not obj.bbox.contains(obj.position):
            problems.append(f"frame {t}: object {obj.id} bbox does not contain its position")
        if not obj.bbox.in_canvas():
            problems.append(f"frame {t}: object {obj.id} bbox outside canvas")
        if obj.is_occluder != (obj.kind in OCCLUDER_KINDS):
            problems.append(f"frame {t}: object {obj.id} occluder flag disagrees with kind")
    return problems


# --------------------------------------------------------------------- codec

def _int(v: float) -> int:
    if isinstance(v, bool) or int(v) != v:
        raise ValueError(f"non-integer scene coordinate {v!r}")
    return int(v)


def _encode_frame(frame: Frame) -> dict:
    return {
        "index": frame.index,
        "characters": [
            {"id": ch.id, "head": [_int(ch.head.x), _int(ch.head.y)],
             "facing": ch.facing.value, "expression": ch.expression.value}
            for ch in frame.characters if ch.present
        ],
        "objects": [
            {"id": o.id, "kind": o.kind.value,
             "position": [_int(o.position.x), _int(o.position.y)],
             "bbox": [_int(o.bbox.x0), _int(o.bbox.y0), _int(o.bbox.x1), _int(o.bbox.y1)],
             "is_occluder": o.is_occluder, "state_tag": o.state_tag}
            for o in frame.objects
        ],
    }


def encode_scene(scene: Scene) -> dict:
    """Encode a valid scene as a JSON-ready document (integers only)."""
    violations = validate_scene(scene)
    if violations:
        raise InvalidSceneError(violations)
    return {
        "version": SCHEMA_VERSION,
        "seed": scene.seed,
        "template_kind": scene.template_kind.value,
        "frames": [_encode_frame(f) for f in scene.frames],
        "proposition": {
            "subject": scene.proposition.subject,
            "predicate": scene.proposition.predicate.value,
            "truth": [int(v) for v in scene.proposition.truth],
        },
        "labels": {
            "matrix": [[int(v) for v in row] for row in scene.labels.matrix],
            "any_frame": [int(v) for v in scene.labels.any_frame],
        },
    }


def _get(doc: dict, key: str, where: str) -> Any:
    if not isinstance(doc, dict):
        raise SceneFormatError(f"{where}: expected an object")
    if key not in doc:
        raise SceneFormatError(f"{where}: missing field '{key}'")
    return doc[key]


def _enum(cls, value, where: str):
    try:
        return cls(value)
    except ValueError:
        raise SceneFormatError(f"{where}: '{value}' is not a valid {cls.__name__}") from None


def _number(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SceneFormatError(f"{where}: expected an integer, got {v!r}")
    return v


def _pair(v, where: str) -> Vec2:
    if not isinstance(v, list) or len(v) != 2:
        raise SceneFormatError(f"{where}: expected [x, y]")
    return Vec2(_number(v[0], where), _number(v[1], where))


def _decode_frame(doc: dict, where: str) -> Frame:
    index = _number(_get(doc, "index", where), where + ".index")
    present = []
    for i, cd in enumerate(_get(doc, "characters", where)):
        w = f"{where}.characters[{i}]"
        cid = _number(_get(cd, "id", w), w + ".id")
        if not 0 <= cid < NUM_CHARACTERS:
            raise SceneFormatError(f"{w}.id: {cid} out of range 0..{NUM_CHARACTERS - 1}")
        present.append(CharacterInstance(
            id=cid,
            head=_pair(_get(cd, "head", w), w + ".head"),
            facing=_enum(Facing, _get(cd, "facing", w), w + ".facing"),
            expression=_enum(Expression, _get(cd, "expression", w), w + ".expression"),
            present=True,
        ))
    objects = []
    for i, od in enumerate(_get(doc, "objects", where)):
        w = f"{where}.objects[{i}]"
        bb = _get(od, "bbox", w)
        if not isinstance(bb, list) or len(bb) != 4:
            raise SceneFormatError(f"{w}.bbox: expected [x0, y0, x1, y1]")
        occ = _get(od, "is_occluder", w)
        if not isinstance(occ, bool):
            raise SceneFormatError(f"{w}.is_occluder: expected a boolean")
        objects.append(SceneObject(
            id=_number(_get(od, "id", w), w + ".id"),
            kind=_enum(ObjectKind, _get(od, "kind", w), w + ".kind"),
            position=_pair(_get(od, "position", w), w + ".position"),
            bbox=Box(*(_number(v, w + ".bbox") for v in bb)),
            is_occluder=occ,
            state_tag=_number(_get(od, "state_tag", w), w + ".state_tag"),
        ))
    return Frame.build(index, present, objects)


def _bools(v, n: int, where: str) -> tuple[bool, ...]:
    if not isinstance(v, list) or len(v) != n or any(x not in (0, 1) or isinstance(x, float) for x in v):
        raise SceneFormatError(f"{where}: expected {n} values in {{0, 1}}")
    return tuple(bool(x) for x in v)


def decode_scene(doc: dict) -> Scene:
    """Inverse of :func:`encode_scene`; raises SceneFormatError on bad documents."""
    version = _get(doc, "version", "scene")
    if version != SCHEMA_VERSION:
        raise SceneFormatError(f"unsupported scene schema version {version!r} (expected {SCHEMA_VERSION!r})")
    frames = tuple(_decode_frame(fd, f"frames[{i}]")
                   for i, fd in enumerate(_get(doc, "frames", "scene")))
    pd = _get(doc, "proposition", "scene")
    n_truth = len(_get(pd, "truth", "proposition")) if isinstance(pd, dict) else 0
    prop = Proposition(
        subject=_number(_get(pd, "subject", "proposition"), "proposition.subject"),
        predicate=_enum(Predicate, _get(pd, "predicate", "proposition"), "proposition.predicate"),
        truth=_bools(pd["truth"], n_truth, "proposition.truth"),
    )
    ld = _get(doc, "labels", "scene")
    rows = _get(ld, "matrix", "labels")
    if not isinstance(rows, list) or len(rows) != NUM_CHARACTERS:
        raise SceneFormatError(f"labels.matrix: expected {NUM_CHARACTERS} rows")
    matrix = tuple(_bools(r, NUM_FRAMES, f"labels.matrix[{c}]") for c, r in enumerate(rows))
    any_frame = _bools(_get(ld, "any_frame", "labels"), NUM_CHARACTERS, "labels.any_frame")
    seed = _number(_get(doc, "seed", "scene"), "seed")
    return Scene(
        frames=frames,
        proposition=prop,
        labels=MistakenLabels(matrix, any_frame),
        seed=seed,
        template_kind=_enum(TemplateKind, _get(doc, "template_kind", "scene"), "template_kind"),
    )


def dumps_scene(scene: Scene) -> str:
    return json.dumps(encode_scene(scene), indent=1) + "\n"


def loads_scene(text: str) -> Scene:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"not valid JSON: {exc}") from None
    return decode_scene(doc)


# ------------------------------------------------------------- interpolation

def _lerp(a: float, b: float, alpha: float) -> float:
    if alpha == 0:
        return a
    if alpha == 1:
        return b
    return a + (b - a) * alpha


def _lerp_vec(a: Vec2, b: Vec2, alpha: float) -> Vec2:
    return Vec2(_lerp(a.x, b.x, alpha), _lerp(a.y, b.y, alpha))


def interpolate_frame(scene: Scene, t: int, alpha: float) -> Frame:
    """In-between frame for animation; never meant as model input.

    Positions of entities present in both frames are blended linearly.
    Everything discrete comes from frame ``t`` when ``alpha < 0.5`` and from
    frame ``t + 1`` otherwise.
    """
    if not 0 <= t <= NUM_FRAMES - 2:
        raise ValueError(f"frame {t} has no successor to interpolate towards")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    a, b = scene.frames[t], scene.frames[t + 1]
    near = a if alpha < 0.5 else b

    chars = []
    for ca, cb, cn in zip(a.characters, b.characters, near.characters):
        if ca.present and cb.present:
            cn = replace(cn, head=_lerp_vec(ca.head, cb.head, alpha))
        chars.append(cn)

    other = b if near is a else a
    objects = []
    for on in near.objects:
        oo = other.find_object(on.id)
        if oo is not None:
            oa, ob = (on, oo) if near is a else (oo, on)
            on = replace(
                on,
                position=_lerp_vec(oa.position, ob.position, alpha),
                bbox=Box(_lerp(oa.bbox.x0, ob.bbox.x0, alpha), _lerp(oa.bbox.y0, ob.bbox.y0, alpha),
                         _lerp(oa.bbox.x1, ob.bbox.x1, alpha), _lerp(oa.bbox.y1, ob.bbox.y1, alpha)),
            )
        objects.append(on)
    return Frame(near.index, tuple(chars), tuple(objects))


# ----------------------------------------------------------------- rendering

_OBJECT_FILL = {
    ObjectKind.CHAIR: "#8d6e63", ObjectKind.BALL: "#e53935", ObjectKind.PIE: "#f9a825",
    ObjectKind.BIKE: "#1e88e5", ObjectKind.DOG: "#6d4c41", ObjectKind.CORN: "#fdd835",
    ObjectKind.BASKET: "#a1887f", ObjectKind.PAINTING: "#7e57c2", ObjectKind.COUCH: "#5c6bc0",
    ObjectKind.TABLE: "#795548", ObjectKind.BOX: "#bcaaa4", ObjectKind.BUSH: "#43a047",
}

_EXPRESSION_MOUTH = {
    Expression.NEUTRAL: "M -6 8 L 6 8",
    Expression.HAPPY: "M -6 6 Q 0 12 6 6",
    Expression.SAD: "M -6 10 Q 0 4 6 10",
    Expression.ANGRY: "M -6 9 L 6 7",
    Expression.SURPRISED: "M -3 8 A 3 3 0 1 0 3 8 A 3 3 0 1 0 -3 8",
}


def _fmt(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return f"{v:.3f}".rstrip("0").rstrip(".")


def render_svg(frame: Frame, highlight: int | None = None) -> str:
    """Render a frame as a standalone SVG document.

    Character glyphs are drawn facing left and mirrored with ``scale(-1,1)``
    when the character faces right.  ``highlight`` marks one character with a
    red arrow above its head.
    """
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_WIDTH}" height="{CANVAS_HEIGHT}" '
        f'viewBox="0 0 {CANVAS_WIDTH} {CANVAS_HEIGHT}">',
        f'<rect class="background" x="0" y="0" width="{CANVAS_WIDTH}" height="{CANVAS_HEIGHT}" fill="#eef6fb"/>',
    ]
    for obj in sorted(frame.objects, key=lambda o: (not o.is_occluder, o.id)):
        bb = obj.bbox
        out.append(
            f'<g class="object" data-id="{obj.id}" data-kind="{obj.kind.value}">'
            f'<rect x="{_fmt(bb.x0)}" y="{_fmt(bb.y0)}" width="{_fmt(bb.x1 - bb.x0)}" '
            f'height="{_fmt(bb.y1 - bb.y0)}" rx="6" fill="{_OBJECT_FILL[obj.kind]}"/>'
            f'<text x="{_fmt(obj.position.x)}" y="{_fmt(obj.position.y)}" font-size="10" '
            f'text-anchor="middle">{obj.kind.value}</text></g>'
        )
    for ch in frame.characters:
        if not ch.present:
            continue
        transform = f"translate({_fmt(ch.head.x)},{_fmt(ch.head.y)})"
        if ch.facing is Facing.RIGHT:
            transform += " scale(-1,1)"
        top, bottom = -BODY_ABOVE_HEAD, BODY_BELOW_HEAD
        out.append(
            f'<g class="character" data-id="{ch.id}" transform="{transform}">'
            f'<rect x="-{BODY_HALF_WIDTH}" y="20" width="{2 * BODY_HALF_WIDTH}" '
            f'height="{bottom - 20}" rx="10" fill="hsl({ch.id * 18},55%,55%)"/>'
            f'<circle cx="0" cy="0" r="{-top - 8}" fill="#ffe0bd" stroke="#333"/>'
            f'<path d="M -22 -2 L -30 3 L -21 6 Z" fill="#ffe0bd" stroke="#333"/>'
            f'<circle cx="-10" cy="-4" r="2.5" fill="#333"/>'
            f'<path d="{_EXPRESSION_MOUTH[ch.expression]}" stroke="#333" fill="none"/></g>'
        )
    if highlight is not None and frame.characters[highlight].present:
        h = frame.characters[highlight].head
        x, y = _fmt(h.x), _fmt(h.y - BODY_ABOVE_HEAD - 8)
        out.append(
            f'<g class="highlight" data-id="{highlight}" transform="translate({x},{y})">'
            f'<path d="M 0 0 L -9 -16 L -3 -16 L -3 -40 L 3 -40 L 3 -16 L 9 -16 Z" fill="#d32f2f"/></g>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
