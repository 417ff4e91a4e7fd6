import pytest

from mistaken_lab.generator import generate_dataset
from mistaken_lab.scene import (
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
    proposition_truth,
)


def char(cid, x, y=200, facing=Facing.LEFT, expr=Expression.NEUTRAL):
    return CharacterInstance(cid, Vec2(x, y), facing, expr, True)


def small(oid, x, y=320, slot=0, kind=ObjectKind.CHAIR, half=20):
    return SceneObject(oid, kind, Vec2(x, y), Box(x - half, y - half, x + half, y + half), False, slot)


def occluder(oid, x0, y0, x1, y1, kind=ObjectKind.COUCH):
    return SceneObject(oid, kind, Vec2((x0 + x1) // 2, (y0 + y1) // 2), Box(x0, y0, x1, y1), True, 0)


def make_scene(frames_spec, subject=0, kind=TemplateKind.OCCLUDED_CHANGE, seed=0, labels=None):
    """frames_spec: list of (characters, objects) per frame."""
    frames = tuple(Frame.build(t, cs, os) for t, (cs, os) in enumerate(frames_spec))
    prop = Proposition(subject, Predicate.AT_LOCATION,
                       proposition_truth(frames, subject, Predicate.AT_LOCATION))
    return Scene(frames, prop, labels or MistakenLabels.all_false(), seed, kind)


@pytest.fixture(scope="session")
def dataset_1213():
    return generate_dataset(1213, 0)
