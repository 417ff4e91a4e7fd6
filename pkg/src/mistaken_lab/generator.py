"""Procedural story generation and the belief oracle that labels it.

Visibility is a half-plane field of view plus occluder line-of-sight.  Beliefs
are the last state in which each character saw each object; a character is
mistaken in a frame when it is present, has seen the proposition's subject at
some point, and its remembered answer differs from the true one.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .scene import (
    CANVAS_WIDTH,
    NUM_CHARACTERS,
    NUM_FRAMES,
    OCCLUDER_KINDS,
    Box,
    CharacterInstance,
    Expression,
    Facing,
    Frame,
    MistakenLabels,
    ObjectKind,
    Predicate,
    Proposition,
    Scene,
    SceneObject,
    TemplateKind,
    Vec2,
    believed_answer,
    dumps_scene,
    loads_scene,
    proposition_truth,
    reference_state,
)

log = logging.getLogger(__name__)

DATASET_VERSION = "1"
CAUSE_KINDS = (TemplateKind.OCCLUDED_CHANGE, TemplateKind.OUT_OF_FOV_CHANGE, TemplateKind.ABSENCE_CHANGE)


# ---------------------------------------------------------------- visibility

def segment_hits_box(p: Vec2, q: Vec2, box: Box) -> bool:
    """Liang-Barsky clip of segment pq against a closed box."""
    dx, dy = q.x - p.x, q.y - p.y
    lo, hi = 0.0, 1.0
    for num, den in ((p.x - box.x0, -dx), (box.x1 - p.x, dx),
                     (p.y - box.y0, -dy), (box.y1 - p.y, dy)):
        if den == 0:
            if num < 0:
                return False
            continue
        r = num / den
        if den < 0:
            lo = max(lo, r)
        else:
            hi = min(hi, r)
        if lo > hi:
            return False
    return True


def is_visible(observer: CharacterInstance, target: Vec2, frame: Frame) -> bool:
    """Whether ``observer`` can see the point ``target`` in ``frame``.

    The field of view is the open half-plane on the facing side of the head.
    Occluders whose box contains the head or the target do not block.
    """
    if not observer.present:
        raise ValueError(f"character {observer.id} is absent and cannot observe")
    head = observer.head
    if observer.facing is Facing.LEFT:
        if not target.x < head.x:
            return False
    elif not target.x > head.x:
        return False
    for obj in frame.objects:
        if not obj.is_occluder:
            continue
        if obj.bbox.contains(head) or obj.bbox.contains(target):
            continue
        if segment_hits_box(head, target, obj.bbox):
            return False
    return True


# ------------------------------------------------------------------- beliefs

@dataclass(frozen=True)
class BeliefState:
    """Per-character memory: object id -> (last observed state, frame seen).

    Objects a character has never seen have no entry.  ``frame`` is the index
    of the last frame folded in, -1 before the first update.
    """
    frame: int = -1
    memory: Mapping[int, Mapping[int, tuple[int, int]]] = field(default_factory=dict)

    def recall(self, cid: int, oid: int) -> tuple[int, int] | None:
        return self.memory.get(cid, {}).get(oid)


def update_beliefs(beliefs: BeliefState, frame: Frame) -> BeliefState:
    if frame.index != beliefs.frame + 1:
        raise ValueError(f"expected frame {beliefs.frame + 1}, got frame {frame.index}")
    memory = {c: dict(m) for c, m in beliefs.memory.items()}
    for ch in frame.characters:
        if not ch.present:
            continue
        for obj in frame.objects:
            if is_visible(ch, obj.position, frame):
                memory.setdefault(ch.id, {})[obj.id] = (obj.state_tag, frame.index)
    return BeliefState(frame.index, memory)


def derive_labels(scene: Scene) -> MistakenLabels:
    prop = scene.proposition
    ref = reference_state(scene.frames, prop.subject)
    rows = [[False] * NUM_FRAMES for _ in range(NUM_CHARACTERS)]
    beliefs = BeliefState()
    for frame in scene.frames:
        beliefs = update_beliefs(beliefs, frame)
        t = frame.index
        for ch in frame.characters:
            if not ch.present:
                continue
            seen = beliefs.recall(ch.id, prop.subject)
            if seen is None:
                continue
            rows[ch.id][t] = believed_answer(prop.predicate, seen[0], ref) != prop.truth[t]
    return MistakenLabels(tuple(tuple(r) for r in rows))


# ---------------------------------------------------------------- generation

SLOT_X = (60, 176, 292, 408, 524, 640)
OBJ_HALF = 20
OCC_HALF_W = 60
OCC_TOP, OCC_BOTTOM = 225, 390
HEAD_Y = (130, 210)

_SMALL_KINDS = [k for k in ObjectKind if k not in OCCLUDER_KINDS]
_OCC_KINDS = sorted(OCCLUDER_KINDS, key=lambda k: k.value)
_EXPRESSIONS = list(Expression)
_BASE_EXPR_P = np.array([0.40, 0.25, 0.10, 0.10, 0.15])
_VICTIM_EXPR_P = np.array([0.38, 0.32, 0.08, 0.08, 0.14])
# some identities are cast as the victim more often than others
_VICTIM_ID_P = np.exp(0.09 * np.arange(NUM_CHARACTERS))
_VICTIM_ID_P /= _VICTIM_ID_P.sum()


class _Story:
    """Mutable per-frame cast and object layout used while sampling a scene."""

    def __init__(self):
        self.cast: list[dict[int, CharacterInstance]] = [{} for _ in range(NUM_FRAMES)]
        self.objects: list[list[SceneObject]] = [[] for _ in range(NUM_FRAMES)]

    def put(self, t: int, cid: int, x: int, y: int, facing: Facing, expr: Expression):
        self.cast[t][cid] = CharacterInstance(cid, Vec2(x, y), facing, expr, True)

    def frame(self, t: int, mirror: bool) -> Frame:
        chars = self.cast[t].values()
        objs = self.objects[t]
        if mirror:
            chars = [replace(c, head=Vec2(CANVAS_WIDTH - c.head.x, c.head.y), facing=c.facing.flipped())
                     for c in chars]
            objs = [replace(o, position=Vec2(CANVAS_WIDTH - o.position.x, o.position.y),
                            bbox=o.bbox.mirrored(CANVAS_WIDTH / 2))
                    for o in objs]
            objs = [replace(o, bbox=Box(*(int(v) for v in (o.bbox.x0, o.bbox.y0, o.bbox.x1, o.bbox.y1))))
                    for o in objs]
        return Frame.build(t, chars, objs)


def _small_object(oid: int, kind: ObjectKind, slot: int, y: int) -> SceneObject:
    x = SLOT_X[slot]
    return SceneObject(oid, kind, Vec2(x, y), Box(x - OBJ_HALF, y - OBJ_HALF, x + OBJ_HALF, y + OBJ_HALF),
                       False, slot)


def _occluder(oid: int, kind: ObjectKind, cx: int) -> SceneObject:
    return SceneObject(oid, kind, Vec2(cx, (OCC_TOP + OCC_BOTTOM) // 2),
                       Box(cx - OCC_HALF_W, OCC_TOP, cx + OCC_HALF_W, OCC_BOTTOM), True, 0)


def _sees(x: int, y: int, facing: Facing, target: SceneObject, objects: Sequence[SceneObject]) -> bool:
    probe = Frame.build(0, [], objects)
    return is_visible(CharacterInstance(0, Vec2(x, y), facing, present=True), target.position, probe)


class _Attempt(Exception):
    """Sampled layout does not satisfy the template; draw again."""


def _sample_layout(kind: TemplateKind, rng: np.random.Generator):
    """Sample one candidate story in canonical orientation (change side = left for
    occlusion, behind-a-left-facing-victim for the others)."""
    story = _Story()
    ids = rng.permutation(NUM_CHARACTERS)
    victim = int(rng.choice(NUM_CHARACTERS, p=_VICTIM_ID_P))
    others = [int(c) for c in ids if c != victim]
    mover, bystanders = others[0], others[1:3]

    def expr(p=_BASE_EXPR_P) -> Expression:
        return _EXPRESSIONS[int(rng.choice(5, p=p))]

    def head_y() -> int:
        return int(rng.integers(HEAD_Y[0], HEAD_Y[1] + 1))

    tc = int(rng.choice([2, 3, 4, 5], p=[0.25, 0.3, 0.3, 0.15]))
    # resolution frame: victim finally looks; 8 = never within the story
    tr = NUM_FRAMES if rng.random() < 0.5 else int(rng.integers(tc + 1, NUM_FRAMES + 1))
    obj_y = int(rng.integers(300, 351))

    shape = kind
    witnessed = False
    if kind is TemplateKind.NO_MISTAKE:
        shape = CAUSE_KINDS[int(rng.integers(3))]
        witnessed = True

    # every cast member gets an on-stage span from the same family of
    # distributions, so presence alone says little about who is mistaken
    v_start = 0 if rng.random() < 0.7 else int(rng.integers(1, tc))
    v_end = NUM_FRAMES if rng.random() < 0.6 else int(rng.integers(tc + 1, NUM_FRAMES))

    oids = [int(v) for v in rng.permutation(8)]
    subject_kind = _SMALL_KINDS[int(rng.integers(len(_SMALL_KINDS)))]
    occ = None
    vy = head_y()
    v_expr = expr(_VICTIM_EXPR_P)

    if shape is TemplateKind.OCCLUDED_CHANGE:
        # victim on the right facing left; pB hidden behind the occluder
        sb = int(rng.integers(0, 2))
        sa = int(rng.integers(sb + 2, 5))
        occ_cx = int(rng.integers(SLOT_X[sb] + OBJ_HALF + OCC_HALF_W + 2, SLOT_X[sb + 2] + 30))
        occ = _occluder(oids[1], _OCC_KINDS[int(rng.integers(len(_OCC_KINDS)))], occ_cx)
        lo_x = max(SLOT_X[sa] + 25, occ_cx + OCC_HALF_W + 20)
        if lo_x > 670:
            raise _Attempt
        hv = int(rng.integers(lo_x, 671))
        v_facing = [Facing.LEFT] * NUM_FRAMES
        v_x = [hv] * NUM_FRAMES
        if witnessed:
            # the change happens in plain view: new slot is in front of the occluder
            sb = sa - 1 if SLOT_X[sa - 1] - OBJ_HALF > occ_cx + OCC_HALF_W else sa
            if sb == sa:
                raise _Attempt
        elif tr < NUM_FRAMES:
            # victim walks round to the far side of the occluder and looks back
            for t in range(tr, NUM_FRAMES):
                v_x[t] = int(rng.integers(30, max(31, SLOT_X[sb] - 15)))
                v_facing[t] = Facing.RIGHT
    elif shape is TemplateKind.OUT_OF_FOV_CHANGE:
        # victim on the left; subject to its right; victim turns its back to it
        hv = int(rng.integers(40, 330))
        slots = [s for s in range(6) if SLOT_X[s] > hv + 30]
        if len(slots) < 2:
            raise _Attempt
        sa, sb = (int(s) for s in rng.choice(slots, size=2, replace=False))
        ts = int(rng.integers(v_start + 1, tc + 1))
        v_x = [hv] * NUM_FRAMES
        v_facing = [Facing.RIGHT if (t < ts or t >= tr) else Facing.LEFT for t in range(NUM_FRAMES)]
        if witnessed:
            turn_back = int(rng.integers(tc + 1, NUM_FRAMES + 1))
            v_facing = [Facing.RIGHT if t <= tc or t >= turn_back else Facing.LEFT
                        for t in range(NUM_FRAMES)]
    else:
        # absence: victim sees the subject, leaves, returns with its back to the new spot
        hv = int(rng.integers(300, 661))
        slots_a = [s for s in range(6) if SLOT_X[s] < hv - 30]
        sa = int(rng.choice(slots_a))
        away = int(rng.integers(1, 3))
        if tc + away > NUM_FRAMES - 1:
            raise _Attempt
        ret_x = int(rng.integers(40, 420))
        slots_b = [s for s in range(6) if SLOT_X[s] > ret_x + 30 and s != sa]
        if not slots_b:
            raise _Attempt
        sb = int(rng.choice(slots_b))
        v_x = [hv if t < tc else ret_x for t in range(NUM_FRAMES)]
        v_facing = [Facing.LEFT] * NUM_FRAMES
        tr = max(tr, tc + away + 1)
        for t in range(tr, NUM_FRAMES):
            v_facing[t] = Facing.RIGHT
        if witnessed:
            away = 0
            for t in range(tc, NUM_FRAMES):
                v_facing[t] = Facing.RIGHT
        v_absent = set(range(tc, tc + away))
        v_end = max(v_end, tc + away + 1)

    if shape is not TemplateKind.ABSENCE_CHANGE:
        v_absent = set()
    v_off = v_absent | set(range(v_start)) | set(range(v_end, NUM_FRAMES))

    subject_id = oids[0]
    objects_before = [_small_object(subject_id, subject_kind, sa, obj_y)]
    objects_after = [_small_object(subject_id, subject_kind, sb, obj_y)]
    static = []
    if occ is not None:
        static.append(occ)
    elif rng.random() < 0.5:
        cx = int(rng.integers(OCC_HALF_W, CANVAS_WIDTH - OCC_HALF_W + 1))
        static.append(_occluder(oids[1], _OCC_KINDS[int(rng.integers(len(_OCC_KINDS)))], cx))
    used = {sa, sb}
    for k in range(int(rng.integers(0, 3))):
        free = [s for s in range(6) if s not in used]
        s = int(rng.choice(free))
        used.add(s)
        static.append(_small_object(oids[2 + k], _SMALL_KINDS[int(rng.integers(len(_SMALL_KINDS)))], s, obj_y))
    for t in range(NUM_FRAMES):
        story.objects[t] = (objects_before if t < tc else objects_after) + static

    subj_b = objects_after[0]
    subj_a = objects_before[0]
    for t in range(NUM_FRAMES):
        if t in v_off:
            continue
        e = v_expr
        if t == tr and not witnessed:
            e = Expression.SURPRISED
        story.put(t, victim, v_x[t], vy, v_facing[t], e)

    # victim must have seen the subject before the change
    if not any(t not in v_off and _sees(v_x[t], vy, v_facing[t], subj_a, story.objects[t])
               for t in range(tc)):
        raise _Attempt

    # mover: beside the new spot, facing it, on stage at the change
    span = range(int(rng.integers(0, tc + 1)), int(rng.integers(tc + 1, NUM_FRAMES + 1)))
    side = 1 if rng.random() < 0.5 else -1
    mx = SLOT_X[sb] + side * int(rng.integers(45, 110))
    if not 30 <= mx <= CANVAS_WIDTH - 30:
        side = -side
        mx = SLOT_X[sb] + side * int(rng.integers(45, 110))
    m_facing = Facing.LEFT if side > 0 else Facing.RIGHT
    my, m_expr = head_y(), expr()
    for t in span:
        if len(story.cast[t]) >= 4:
            continue
        story.put(t, mover, mx, my, m_facing, m_expr)
    if not _sees(mx, my, m_facing, subj_b, story.objects[tc]):
        raise _Attempt

    n_by = int(rng.choice([0, 1, 2], p=[0.3, 0.45, 0.25]))
    for cid in bystanders[:n_by]:
        if rng.random() < 0.5:
            s = int(rng.integers(0, tc + 1))
            e = int(rng.integers(tc + 1, NUM_FRAMES + 1))
        else:
            s = int(rng.integers(0, NUM_FRAMES - 1))
            e = int(rng.integers(s + 2, NUM_FRAMES + 1))
        bx, by = int(rng.integers(30, 671)), head_y()
        bf = Facing.LEFT if rng.random() < 0.5 else Facing.RIGHT
        b_expr = expr()
        for t in range(s, e):
            if rng.random() < 0.2:
                bf = bf.flipped()
            if len(story.cast[t]) < 4:
                story.put(t, cid, bx, by, bf, b_expr)

    return story, victim, subject_id, tc, v_absent


def _check_template(kind: TemplateKind, scene: Scene, victim: int, tc: int, absent: set[int]) -> bool:
    labels = scene.labels
    if kind is TemplateKind.NO_MISTAKE:
        return not any(labels.any_frame)
    if kind is TemplateKind.ABSENCE_CHANGE:
        back = max(absent) + 1 if absent else tc
        return tc in absent and back < NUM_FRAMES and labels.at(victim, back)
    if not labels.at(victim, tc):
        return False
    v = scene.frames[tc].characters[victim]
    subj = scene.frames[tc].find_object(scene.proposition.subject)
    ahead = subj.position.x < v.head.x if v.facing is Facing.LEFT else subj.position.x > v.head.x
    # occluded: on the facing side but blocked; out of view: behind the victim
    return ahead if kind is TemplateKind.OCCLUDED_CHANGE else not ahead


def _assemble(story: _Story, mirror: bool, subject: int, seed: int, kind: TemplateKind) -> Scene:
    frames = tuple(story.frame(t, mirror) for t in range(NUM_FRAMES))
    prop = Proposition(subject, Predicate.AT_LOCATION, proposition_truth(frames, subject, Predicate.AT_LOCATION))
    draft = Scene(frames, prop, MistakenLabels.all_false(), seed, kind)
    return replace(draft, labels=derive_labels(draft))


def generate_scene(kind: TemplateKind, seed: int, max_attempts: int = 500) -> Scene:
    """Deterministic 8-frame story of the given template kind.

    Labels always come from :func:`derive_labels` on the emitted frames.
    """
    kind = TemplateKind(kind)
    rng = np.random.default_rng([int(seed) & (2**64 - 1), list(TemplateKind).index(kind)])
    for _ in range(max_attempts):
        try:
            story, victim, subject, tc, absent = _sample_layout(kind, rng)
        except _Attempt:
            continue
        scene = _assemble(story, bool(rng.random() < 0.5), subject, int(seed), kind)
        if _check_template(kind, scene, victim, tc, absent):
            return scene
    raise RuntimeError(f"could not realise a {kind.value} scene for seed {seed}")


# ------------------------------------------------------------------- dataset

@dataclass(frozen=True)
class GenTargets:
    mistaken_frame_fraction: float = 0.2365
    mean_characters_per_frame: float = 1.71
    fraction_tolerance: float = 0.03
    characters_tolerance: float = 0.3

    def __post_init__(self):
        if not 0 < self.mistaken_frame_fraction < 1:
            raise ValueError("mistaken_frame_fraction must lie strictly between 0 and 1")
        if self.fraction_tolerance < 0 or self.characters_tolerance < 0:
            raise ValueError("tolerances must be non-negative")


@dataclass
class Dataset:
    scenes: list[Scene]
    manifest: dict

    def __len__(self) -> int:
        return len(self.scenes)


class InfeasibleTargetsError(RuntimeError):
    """The realised dataset misses the generation targets."""

    def __init__(self, message: str, dataset: Dataset):
        super().__init__(message)
        self.dataset = dataset


def realized_rates(scenes: Sequence[Scene]) -> tuple[float, float]:
    """(fraction of present character-frames that are mistaken, mean present characters per frame)."""
    present = mistaken = 0
    for s in scenes:
        for f in s.frames:
            for ch in f.characters:
                if ch.present:
                    present += 1
                    mistaken += s.labels.matrix[ch.id][f.index]
    n_frames = NUM_FRAMES * len(scenes)
    return (mistaken / present if present else 0.0), present / n_frames


def _scene_seeds(count: int, master_seed: int) -> tuple[list[int], np.ndarray, np.ndarray]:
    rng = np.random.default_rng(master_seed)
    seeds: list[int] = []
    seen = set()
    while len(seeds) < count:
        for s in rng.integers(0, 2**63 - 1, size=count - len(seeds), dtype=np.int64):
            s = int(s)
            if s not in seen:
                seen.add(s)
                seeds.append(s)
    u = rng.random(count)
    v = rng.random(count)
    return seeds, u, v


def _kinds_for(u: np.ndarray, v: np.ndarray, weights: Mapping[TemplateKind, float]) -> list[TemplateKind]:
    order = list(CAUSE_KINDS) + [TemplateKind.NO_MISTAKE]
    w = np.array([max(0.0, float(weights.get(k, 0.0))) for k in order])
    if w.sum() <= 0:
        raise ValueError("template mix has no positive weight")
    p_none = w[3] / w.sum()
    causes = w[:3] / w[:3].sum() if w[:3].sum() > 0 else np.full(3, 1 / 3)
    cum = np.cumsum(causes)
    kinds = []
    for ui, vi in zip(u, v):
        if ui < p_none:
            kinds.append(TemplateKind.NO_MISTAKE)
        else:
            kinds.append(order[min(int(np.searchsorted(cum, vi, side="right")), 2)])
    return kinds


def _mix(p_none: float) -> dict[TemplateKind, float]:
    out = {k: (1 - p_none) / 3 for k in CAUSE_KINDS}
    out[TemplateKind.NO_MISTAKE] = p_none
    return out


def generate_dataset(count: int, master_seed: int, targets: GenTargets | None = None,
                     mix: Mapping[TemplateKind, float] | None = None,
                     max_adjustments: int = 12) -> Dataset:
    """Generate ``count`` scenes whose label prior matches ``targets``.

    Without an explicit ``mix`` the share of no-mistake scenes is bisected (at
    most ``max_adjustments`` times) until the realised mistaken fraction lands
    inside the tolerance band.  Raises InfeasibleTargetsError (carrying the
    dataset) if a band is missed.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    targets = targets or GenTargets()
    seeds, u, v = _scene_seeds(count, master_seed)
    cache: dict[tuple[TemplateKind, int], Scene] = {}

    def build(weights):
        kinds = _kinds_for(u, v, weights)
        scenes = []
        for k, s in zip(kinds, seeds):
            key = (k, s)
            if key not in cache:
                cache[key] = generate_scene(k, s)
            scenes.append(cache[key])
        return kinds, scenes

    target = targets.mistaken_frame_fraction
    if mix is not None:
        weights = dict(mix)
        kinds, scenes = build(weights)
        frac, cpf = realized_rates(scenes)
        adjustments = 0
    else:
        lo, hi = 0.0, 1.0
        best = None
        adjustments = 0
        p = 0.15
        while True:
            weights = _mix(p)
            kinds, scenes = build(weights)
            frac, cpf = realized_rates(scenes)
            err = abs(frac - target)
            if best is None or err < best[0]:
                best = (err, p, kinds, scenes, frac, cpf)
            if err <= targets.fraction_tolerance / 4 or adjustments >= max_adjustments:
                break
            adjustments += 1
            if frac > target:
                lo = p
            else:
                hi = p
            p = (lo + hi) / 2
        _, p, kinds, scenes, frac, cpf = best
        weights = _mix(p)

    feasible = (abs(frac - target) <= targets.fraction_tolerance
                and abs(cpf - targets.mean_characters_per_frame) <= targets.characters_tolerance)
    manifest = {
        "version": DATASET_VERSION,
        "count": count,
        "master_seed": int(master_seed),
        "targets": {
            "mistaken_frame_fraction": targets.mistaken_frame_fraction,
            "mean_characters_per_frame": targets.mean_characters_per_frame,
            "fraction_tolerance": targets.fraction_tolerance,
            "characters_tolerance": targets.characters_tolerance,
        },
        "mix": {k.value: float(weights.get(k, 0.0)) for k in list(CAUSE_KINDS) + [TemplateKind.NO_MISTAKE]},
        "mix_adjustments": adjustments,
        "realized": {"mistaken_frame_fraction": frac, "mean_characters_per_frame": cpf},
        "feasible": feasible,
        "scenes": [{"seed": s, "template_kind": k.value} for s, k in zip(seeds, kinds)],
    }
    dataset = Dataset(scenes, manifest)
    if not feasible:
        raise InfeasibleTargetsError(
            f"realised mistaken fraction {frac:.4f} / characters per frame {cpf:.3f} miss targets "
            f"{target} ± {targets.fraction_tolerance} / {targets.mean_characters_per_frame} "
            f"± {targets.characters_tolerance} after {adjustments} mix adjustments", dataset)
    return dataset


def regenerate(manifest: Mapping) -> Dataset:
    """Rebuild a dataset bit-exactly from its manifest."""
    scenes = [generate_scene(TemplateKind(e["template_kind"]), int(e["seed"])) for e in manifest["scenes"]]
    return Dataset(scenes, dict(manifest))


def save_dataset(dataset: Dataset, out_dir: str | os.PathLike) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(dataset.manifest, indent=1) + "\n", encoding="utf-8")
    for i, scene in enumerate(dataset.scenes):
        (out / f"scene-{i:06d}.json").write_text(dumps_scene(scene), encoding="utf-8")
    return out


def load_dataset(data_dir: str | os.PathLike) -> Dataset:
    root = Path(data_dir)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    scenes = [loads_scene((root / f"scene-{i:06d}.json").read_text(encoding="utf-8"))
              for i in range(manifest["count"])]
    return Dataset(scenes, manifest)


# --------------------------------------------------------------------- stats

@dataclass
class StatsReport:
    """Long-format rows (panel, key, value) for the four bias panels.

    a: P(mistaken | character id), b: P(mistaken | expression),
    c: P(mistaken | frame index), d: one row per present character-frame,
    key ``"x,y"`` and value 1 if mistaken.
    """
    rows: list[tuple[str, str, float]]

    def panel(self, name: str) -> dict[str, float]:
        return {k: v for p, k, v in self.rows if p == name}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["panel", "key", "value"])
        for p, k, v in self.rows:
            w.writerow([p, k, repr(float(v))])
        return buf.getvalue()

    def points(self) -> list[tuple[int, int, bool]]:
        out = []
        for p, k, v in self.rows:
            if p == "d":
                x, y = k.split(",")
                out.append((int(x), int(y), bool(v)))
        return out


def dataset_stats(dataset: Dataset) -> StatsReport:
    if not dataset.scenes:
        raise ValueError("dataset is empty")
    by_char = np.zeros((NUM_CHARACTERS, 2))
    by_expr = {e: [0, 0] for e in Expression}
    by_frame = np.zeros((NUM_FRAMES, 2))
    points = []
    for s in dataset.scenes:
        for f in s.frames:
            for ch in f.characters:
                if not ch.present:
                    continue
                m = s.labels.matrix[ch.id][f.index]
                by_char[ch.id] += (m, 1)
                by_expr[ch.expression][0] += m
                by_expr[ch.expression][1] += 1
                by_frame[f.index] += (m, 1)
                points.append(("d", f"{int(ch.head.x)},{int(ch.head.y)}", float(m)))
    rows = []
    for c in range(NUM_CHARACTERS):
        if by_char[c, 1]:
            rows.append(("a", str(c), by_char[c, 0] / by_char[c, 1]))
    for e in Expression:
        m, n = by_expr[e]
        if n:
            rows.append(("b", e.value, m / n))
    for t in range(NUM_FRAMES):
        if by_frame[t, 1]:
            rows.append(("c", str(t), by_frame[t, 0] / by_frame[t, 1]))
    rows.extend(points)
    return StatsReport(rows)
