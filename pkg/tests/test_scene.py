import json
import xml.etree.ElementTree as ET
from dataclasses import replace

import pytest

from mistaken_lab.generator import generate_scene
from mistaken_lab.scene import (
    Box,
    CharacterInstance,
    Expression,
    Facing,
    Frame,
    MistakenLabels,
    ObjectKind,
    SceneFormatError,
    TemplateKind,
    Vec2,
    decode_scene,
    dumps_scene,
    encode_scene,
    interpolate_frame,
    loads_scene,
    render_svg,
    validate_scene,
)

from conftest import char, make_scene, small

SVG = "{http://www.w3.org/2000/svg}"


def _some_scene(seed=7, kind=TemplateKind.OCCLUDED_CHANGE):
    return generate_scene(kind, seed)


class TestValidate:
    def test_generated_scene_is_valid(self):
        assert validate_scene(_some_scene()) == []

    def test_seven_frames(self):
        s = _some_scene()
        bad = replace(s, frames=s.frames[:7])
        assert "frame count 7 ≠ 8" in validate_scene(bad)

    def test_label_on_absent_character(self):
        s = _some_scene()
        t = 0
        absent = next(c for c in range(20) if not s.frames[t].characters[c].present)
        rows = [list(r) for r in s.labels.matrix]
        rows[absent][t] = True
        bad = replace(s, labels=MistakenLabels(tuple(tuple(r) for r in rows)))
        assert validate_scene(bad) == [f"label true for absent character {absent} in frame {t}"]

    def test_too_many_present(self):
        frames = [([char(c, 100 + 100 * c) for c in range(5)], [small(0, 300)])] + \
                 [([char(0, 100)], [small(0, 300)])] * 7
        assert any("5 present characters" in v for v in validate_scene(make_scene(frames)))

    def test_aggregate_mismatch_and_bbox(self):
        s = _some_scene()
        bad = replace(s, labels=MistakenLabels(s.labels.matrix, (True,) * 20))
        assert "any-frame aggregate differs from row OR" in validate_scene(bad)
        f0 = s.frames[0]
        obj = replace(f0.objects[0], bbox=Box(0, 0, 1, 1))
        frames = (replace(f0, objects=(obj,) + f0.objects[1:]),) + s.frames[1:]
        assert any("does not contain" in v for v in validate_scene(replace(s, frames=frames)))


class TestCodec:
    @pytest.mark.parametrize("kind", list(TemplateKind))
    def test_roundtrip(self, kind):
        for seed in range(25):
            s = generate_scene(kind, seed)
            assert decode_scene(json.loads(json.dumps(encode_scene(s)))) == s

    def test_roundtrip_many(self):
        kinds = list(TemplateKind)
        for i in range(1000):
            s = generate_scene(kinds[i % 4], 10_000 + i)
            assert loads_scene(dumps_scene(s)) == s

    def test_version_error(self):
        doc = encode_scene(_some_scene())
        doc["version"] = "99"
        with pytest.raises(SceneFormatError, match="version"):
            decode_scene(doc)

    def test_missing_field(self):
        doc = encode_scene(_some_scene())
        del doc["frames"][3]["objects"][0]["bbox"]
        with pytest.raises(SceneFormatError, match="frames\\[3\\].objects\\[0\\]: missing field 'bbox'"):
            decode_scene(doc)

    def test_bad_enum(self):
        doc = encode_scene(_some_scene())
        doc["frames"][0]["characters"][0]["facing"] = "up"
        with pytest.raises(SceneFormatError, match="Facing"):
            decode_scene(doc)
        doc = encode_scene(_some_scene())
        doc["template_kind"] = "physics"
        with pytest.raises(SceneFormatError, match="TemplateKind"):
            decode_scene(doc)

    def test_floats_rejected(self):
        doc = encode_scene(_some_scene())
        doc["frames"][0]["objects"][0]["position"][0] = 12.5
        with pytest.raises(SceneFormatError, match="integer"):
            decode_scene(doc)

    def test_hand_written_document(self):
        frame = {"index": 0,
                 "characters": [{"id": 4, "head": [350, 180], "facing": "right", "expression": "sad"}],
                 "objects": [{"id": 2, "kind": "ball", "position": [100, 320],
                              "bbox": [80, 300, 120, 340], "is_occluder": False, "state_tag": 1}]}
        doc = {
            "version": "1", "seed": 42, "template_kind": "no_mistake",
            "frames": [dict(frame, index=t) for t in range(8)],
            "proposition": {"subject": 2, "predicate": "at_location", "truth": [1] * 8},
            "labels": {"matrix": [[0] * 8 for _ in range(20)], "any_frame": [0] * 20},
        }
        s = decode_scene(doc)
        assert validate_scene(s) == []
        assert s.seed == 42 and s.template_kind is TemplateKind.NO_MISTAKE
        f = s.frames[5]
        assert f.index == 5
        assert [c.id for c in f.present_characters()] == [4]
        c4 = f.characters[4]
        assert c4.head == Vec2(350, 180)
        assert c4.facing is Facing.RIGHT and c4.expression is Expression.SAD
        assert f.characters[0] == CharacterInstance.absent(0)
        (obj,) = f.objects
        assert (obj.id, obj.kind, obj.position, obj.bbox, obj.is_occluder, obj.state_tag) == \
            (2, ObjectKind.BALL, Vec2(100, 320), Box(80, 300, 120, 340), False, 1)
        assert s.proposition.truth == (True,) * 8
        assert encode_scene(s) == doc

    def test_encode_rejects_invalid(self):
        s = _some_scene()
        with pytest.raises(ValueError):
            encode_scene(replace(s, frames=s.frames[:7]))


class TestInterpolate:
    def test_endpoints_exact(self):
        for seed in range(20):
            s = generate_scene(TemplateKind.OUT_OF_FOV_CHANGE, seed)
            for t in range(7):
                assert interpolate_frame(s, t, 0.0) == s.frames[t]
                assert interpolate_frame(s, t, 1.0) == s.frames[t + 1]

    def test_linear_position(self):
        frames = [([char(3, 100)], [small(0, 500)]), ([char(3, 200, facing=Facing.RIGHT)], [small(0, 500)])]
        frames += [([char(3, 200)], [small(0, 500)])] * 6
        s = make_scene(frames)
        f = interpolate_frame(s, 0, 0.25)
        assert f.characters[3].head.x == 125
        assert f.characters[3].facing is Facing.LEFT
        assert interpolate_frame(s, 0, 0.5).characters[3].facing is Facing.RIGHT

    def test_presence_switches_at_half(self):
        frames = [([char(3, 100)], [small(0, 500)]), ([char(5, 300)], [small(0, 500)])]
        frames += [([char(5, 300)], [small(0, 500)])] * 6
        s = make_scene(frames)
        early, late = interpolate_frame(s, 0, 0.49), interpolate_frame(s, 0, 0.5)
        assert early.characters[3].present and not early.characters[5].present
        assert late.characters[5].present and not late.characters[3].present

    def test_last_frame_rejected(self):
        with pytest.raises(ValueError):
            interpolate_frame(_some_scene(), 7, 0.5)


class TestRender:
    def test_empty_frame_background_only(self):
        doc = ET.fromstring(render_svg(Frame.build(0)))
        children = list(doc)
        assert len(children) == 1 and children[0].get("class") == "background"

    def test_deterministic(self):
        s = _some_scene()
        for f in s.frames:
            assert render_svg(f, highlight=3) == render_svg(f, highlight=3)

    def test_right_facing_is_mirrored(self):
        f = Frame.build(0, [char(2, 300, facing=Facing.RIGHT), char(9, 500)])
        doc = ET.fromstring(render_svg(f))
        by_id = {g.get("data-id"): g.get("transform") for g in doc.iter(SVG + "g")
                 if g.get("class") == "character"}
        assert by_id["2"] == "translate(300,200) scale(-1,1)"
        assert "scale" not in by_id["9"]

    def test_highlight_arrow(self):
        f = Frame.build(0, [char(2, 300)])
        doc = ET.fromstring(render_svg(f, highlight=2))
        marks = [g for g in doc.iter(SVG + "g") if g.get("class") == "highlight"]
        assert len(marks) == 1 and marks[0].get("data-id") == "2"
