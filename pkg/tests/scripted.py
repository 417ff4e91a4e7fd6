"""Hand-scripted stories with hand-derived label rows.

Each entry: (name, scene, {character: frames where mistaken}).  Characters not
listed are never mistaken.  Coordinates are chosen so every visibility
decision can be checked with pencil and paper.
"""
from mistaken_lab.generator import derive_labels
from mistaken_lab.scene import Facing, ObjectKind, TemplateKind

from conftest import char, make_scene, occluder, small

L, R = Facing.LEFT, Facing.RIGHT


def chair_pulled_away():
    # woman 0 looks at the chair (x=400) from x=300, then turns her back;
    # girl 1 drags it to x=600 in frame 3; the woman looks round in frame 6
    frames = []
    for t in range(8):
        chair = small(0, 400 if t < 3 else 600, slot=2 if t < 3 else 5, kind=ObjectKind.CHAIR)
        woman = char(0, 300, facing=R if t < 2 or t >= 6 else L)
        cast = [woman]
        if 2 <= t <= 4:
            cast.append(char(1, 500, facing=L if t == 2 else R))
        frames.append((cast, [chair]))
    return make_scene(frames, kind=TemplateKind.OUT_OF_FOV_CHANGE), {0: {3, 4, 5}}


def ball_behind_couch():
    # 2 watches the ball at x=400 from x=600; 3 hides it behind the couch at x=100
    couch = occluder(9, 150, 230, 270, 390)
    frames = []
    for t in range(8):
        ball = small(0, 400 if t < 3 else 100, slot=3 if t < 3 else 0, kind=ObjectKind.BALL)
        cast = [char(2, 600, facing=L)]
        if t in (3, 4):
            cast.append(char(3, 50, facing=R))
        frames.append((cast, [ball, couch]))
    return make_scene(frames, kind=TemplateKind.OCCLUDED_CHANGE), {2: {3, 4, 5, 6, 7}}


def pie_moved_while_away():
    # 5 sees the pie at x=200, leaves for frames 2-3 while 6 moves it to x=650,
    # comes back facing the old spot and finally turns round in frame 6
    frames = []
    for t in range(8):
        pie = small(0, 200 if t < 2 else 650, slot=1 if t < 2 else 5, kind=ObjectKind.PIE, half=15)
        cast = []
        if t not in (2, 3):
            cast.append(char(5, 500, facing=R if t >= 6 else L))
        if t in (2, 3):
            cast.append(char(6, 600, facing=R))
        frames.append((cast, [pie]))
    return make_scene(frames, kind=TemplateKind.ABSENCE_CHANGE), {5: {4, 5}}


def dog_moves_then_seen():
    # change at 2 unseen by 7, who is absent at 3 and looks at the new spot from 4
    frames = []
    for t in range(8):
        dog = small(0, 450 if t < 2 else 100, slot=3 if t < 2 else 0, kind=ObjectKind.DOG)
        cast = []
        if t != 3:
            cast.append(char(7, 300, facing=R if t < 3 else L))
        if t == 2:
            cast.append(char(8, 150, facing=L))
        frames.append((cast, [dog]))
    return make_scene(frames, kind=TemplateKind.OUT_OF_FOV_CHANGE), {7: {2}}


def bike_moved_in_plain_view():
    frames = []
    for t in range(8):
        bike = small(0, 100 if t < 3 else 200, slot=0 if t < 3 else 1, kind=ObjectKind.BIKE)
        cast = [char(9, 350, facing=L)]
        if t in (2, 3):
            cast.append(char(4, 260, facing=L))
        frames.append((cast, [bike]))
    return make_scene(frames, kind=TemplateKind.NO_MISTAKE), {}


def unknown_is_not_wrong():
    # 10 never sees the basket (always behind it); 11 sees it, leaves at 3 and
    # returns in frame 7 with its back to the new spot
    frames = []
    for t in range(8):
        basket = small(0, 500 if t < 3 else 600, slot=4 if t < 3 else 5, kind=ObjectKind.BASKET)
        cast = [char(10, 300, facing=L)]
        if t < 3:
            cast.append(char(11, 650, facing=L))
        if t == 7:
            cast.append(char(11, 400, facing=L))
        if t == 3:
            cast.append(char(12, 640, facing=L))
        frames.append((cast, [basket]))
    return make_scene(frames, kind=TemplateKind.ABSENCE_CHANGE), {11: {7}}


SCRIPTED = [
    ("chair pulled away", chair_pulled_away),
    ("ball behind couch", ball_behind_couch),
    ("pie moved while away", pie_moved_while_away),
    ("dog moves then seen", dog_moves_then_seen),
    ("bike moved in plain view", bike_moved_in_plain_view),
    ("unknown is not wrong", unknown_is_not_wrong),
]


def expected_matrix(expected: dict) -> tuple:
    return tuple(tuple(t in expected.get(c, ()) for t in range(8)) for c in range(20))


def labelled(builder):
    """The scripted scene with oracle labels filled in, plus the hand-written matrix."""
    from dataclasses import replace
    scene, expected = builder()
    return replace(scene, labels=derive_labels(scene)), expected_matrix(expected)
