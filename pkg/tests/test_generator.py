from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mistaken_lab.generator import (
    BeliefState,
    GenTargets,
    InfeasibleTargetsError,
    dataset_stats,
    derive_labels,
    generate_dataset,
    generate_scene,
    is_visible,
    load_dataset,
    realized_rates,
    regenerate,
    save_dataset,
    update_beliefs,
)
from mistaken_lab.scene import (
    CharacterInstance,
    Facing,
    Frame,
    TemplateKind,
    Vec2,
    validate_scene,
)

from conftest import char, make_scene, occluder, small
from oracles import oracle_labels, oracle_visible
from scripted import SCRIPTED, labelled


# ---------------------------------------------------------------- visibility

class TestVisibility:
    def test_clear_line(self):
        f = Frame.build(0)
        assert is_visible(char(0, 400), Vec2(100, 200), f)

    def test_behind(self):
        assert not is_visible(char(0, 400), Vec2(600, 200), Frame.build(0))

    def test_occluded_matches_sampling(self):
        f = Frame.build(0, [], [occluder(0, 200, 150, 250, 250)])
        target = Vec2(100, 200)
        ts = np.linspace(0, 1, 10_000)[1:-1]
        xs, ys = 400 + (100 - 400) * ts, 200 + 0 * ts
        sampled_hit = bool(np.any((xs >= 200) & (xs <= 250) & (ys >= 150) & (ys <= 250)))
        assert sampled_hit
        assert is_visible(char(0, 400), target, f) is (not sampled_hit)

    def test_occluder_containing_endpoint_ignored(self):
        f = Frame.build(0, [], [occluder(0, 50, 150, 150, 250)])
        assert is_visible(char(0, 400), Vec2(100, 200), f)

    def test_absent_observer_rejected(self):
        with pytest.raises(ValueError):
            is_visible(CharacterInstance(3), Vec2(0, 0), Frame.build(0))

    @settings(max_examples=200, deadline=None)
    @given(hx=st.integers(1, 699), hy=st.integers(0, 400), dy=st.integers(-50, 50), d=st.integers(1, 300))
    def test_half_plane_flip(self, hx, hy, dy, d):
        f = Frame.build(0)
        me = char(0, hx, hy, facing=Facing.LEFT)
        front, back = Vec2(hx - d, hy + dy), Vec2(hx + d, hy + dy)
        assert is_visible(me, front, f) and not is_visible(me, back, f)
        me_r = replace(me, facing=Facing.RIGHT)
        assert is_visible(me_r, back, f) and not is_visible(me_r, front, f)

    def test_random_against_edge_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(3000):
            x0, y0 = rng.integers(0, 600), rng.integers(0, 300)
            occ = occluder(1, int(x0), int(y0), int(x0 + rng.integers(5, 150)), int(y0 + rng.integers(5, 150)))
            f = Frame.build(0, [], [occ])
            head = (int(rng.integers(0, 701)), int(rng.integers(0, 401)))
            tgt = (int(rng.integers(0, 701)), int(rng.integers(0, 401)))
            fac = Facing.LEFT if rng.random() < 0.5 else Facing.RIGHT
            me = CharacterInstance(0, Vec2(*head), fac, present=True)
            assert is_visible(me, Vec2(*tgt), f) == oracle_visible(head, fac, tgt, [occ])


# ------------------------------------------------------------------- beliefs

def _scripted_trajectory_scene():
    # object A-state (slot 0) seen at 0, changes to slot 3 at 2 unobserved,
    # character absent 2-4, re-observes at 5
    frames = []
    for t in range(8):
        obj = small(0, 100, slot=0) if t < 2 else small(0, 600, slot=3)
        cast = [] if 2 <= t <= 4 else [char(1, 300, facing=Facing.LEFT if t < 5 else Facing.RIGHT)]
        frames.append((cast, [obj]))
    return make_scene(frames)


class TestBeliefs:
    def test_full_trajectory(self):
        s = _scripted_trajectory_scene()
        b = BeliefState()
        trajectory = []
        for f in s.frames:
            b = update_beliefs(b, f)
            trajectory.append(b.recall(1, 0))
        assert trajectory == [(0, 0), (0, 1), (0, 1), (0, 1), (0, 1), (3, 5), (3, 6), (3, 7)]

    def test_out_of_order_rejected(self):
        s = _scripted_trajectory_scene()
        with pytest.raises(ValueError):
            update_beliefs(BeliefState(), s.frames[1])
        b = update_beliefs(BeliefState(), s.frames[0])
        with pytest.raises(ValueError):
            update_beliefs(b, s.frames[2])

    def test_unobserved_persists(self):
        s = _scripted_trajectory_scene()
        b = BeliefState()
        for f in s.frames[:3]:
            b = update_beliefs(b, f)
        assert b.recall(1, 0) == (0, 1)
        assert b.recall(7, 0) is None


class TestLabels:
    @pytest.mark.parametrize("name,builder", SCRIPTED)
    def test_scripted(self, name, builder):
        scene, expected = labelled(builder)
        assert validate_scene(scene) == []
        assert scene.labels.matrix == expected
        assert oracle_labels(scene) == expected

    def test_oracle_equivalence(self):
        kinds = list(TemplateKind)
        for i in range(500):
            s = generate_scene(kinds[i % 4], 777 + i)
            assert derive_labels(s).matrix == oracle_labels(s), (kinds[i % 4], 777 + i)

    def test_observation_corrects(self):
        for i in range(300):
            s = generate_scene(list(TemplateKind)[i % 4], i)
            subj = s.proposition.subject
            for f in s.frames:
                o = f.find_object(subj)
                for ch in f.present_characters():
                    if o is not None and is_visible(ch, o.position, f):
                        assert not s.labels.at(ch.id, f.index)


# ---------------------------------------------------------------- generation

class TestGenerateScene:
    @pytest.mark.parametrize("kind", list(TemplateKind))
    def test_deterministic(self, kind):
        assert generate_scene(kind, 7) == generate_scene(kind, 7)

    def test_valid_and_self_labelled(self):
        kinds = list(TemplateKind)
        for i in range(1000):
            s = generate_scene(kinds[i % 4], i)
            assert validate_scene(s) == []
            assert s.labels == derive_labels(s)
            for f in s.frames:
                assert 1 <= len(f.present_characters()) <= 4 or not f.present_characters()

    def test_no_mistake_all_false(self):
        for seed in range(100):
            assert not any(generate_scene(TemplateKind.NO_MISTAKE, seed).labels.any_frame)

    def test_cause_templates_have_a_victim(self):
        for kind in (TemplateKind.OCCLUDED_CHANGE, TemplateKind.OUT_OF_FOV_CHANGE, TemplateKind.ABSENCE_CHANGE):
            for seed in range(100):
                assert any(generate_scene(kind, seed).labels.any_frame)

    def test_out_of_fov_seed_3(self):
        s = generate_scene(TemplateKind.OUT_OF_FOV_CHANGE, 3)
        truth = s.proposition.truth
        tc = truth.index(False)
        subj = s.frames[tc].find_object(s.proposition.subject)
        victims = [c for c in range(20) if s.labels.at(c, tc)]
        assert victims
        for c in victims:
            v = s.frames[tc].characters[c]
            behind = subj.position.x > v.head.x if v.facing is Facing.LEFT else subj.position.x < v.head.x
            assert behind

    def test_occluded_has_blocking_occluder(self):
        for seed in range(50):
            s = generate_scene(TemplateKind.OCCLUDED_CHANGE, seed)
            tc = s.proposition.truth.index(False)
            f = s.frames[tc]
            subj = f.find_object(s.proposition.subject)
            for c in range(20):
                if s.labels.at(c, tc):
                    v = f.characters[c]
                    ahead = subj.position.x < v.head.x if v.facing is Facing.LEFT else subj.position.x > v.head.x
                    if ahead:
                        bare = replace(f, objects=tuple(o for o in f.objects if not o.is_occluder))
                        assert is_visible(v, subj.position, bare)

    def test_absence_victim_absent_at_change(self):
        for seed in range(50):
            s = generate_scene(TemplateKind.ABSENCE_CHANGE, seed)
            tc = s.proposition.truth.index(False)
            assert any(s.labels.any_frame[c] and not s.frames[tc].characters[c].present for c in range(20))


class TestDataset:
    def test_priors_within_tolerance(self, dataset_1213):
        frac, cpf = realized_rates(dataset_1213.scenes)
        assert 0.2065 <= frac <= 0.2665
        assert abs(cpf - 1.71) <= 0.3
        assert dataset_1213.manifest["feasible"]

    def test_seeds_distinct(self, dataset_1213):
        seeds = [e["seed"] for e in dataset_1213.manifest["scenes"]]
        assert len(set(seeds)) == len(seeds)

    def test_deterministic_and_regenerable(self, tmp_path):
        a, b = generate_dataset(60, 11), generate_dataset(60, 11)
        assert a.manifest == b.manifest and a.scenes == b.scenes
        assert regenerate(a.manifest).scenes == a.scenes
        save_dataset(a, tmp_path / "x")
        save_dataset(b, tmp_path / "y")
        for p in sorted((tmp_path / "x").iterdir()):
            assert p.read_bytes() == (tmp_path / "y" / p.name).read_bytes()
        assert load_dataset(tmp_path / "x").scenes == a.scenes

    def test_forced_no_mistake_is_infeasible(self):
        with pytest.raises(InfeasibleTargetsError) as err:
            generate_dataset(1, 3, mix={TemplateKind.NO_MISTAKE: 1.0})
        assert realized_rates(err.value.dataset.scenes)[0] == 0.0
        assert err.value.dataset.manifest["feasible"] is False

    def test_bad_targets(self):
        with pytest.raises(ValueError):
            GenTargets(mistaken_frame_fraction=1.5)
        with pytest.raises(ValueError):
            generate_dataset(0, 1)


class TestStats:
    def test_no_mistake_only(self):
        ds = generate_dataset(20, 2, mix={TemplateKind.NO_MISTAKE: 1.0}, targets=GenTargets(fraction_tolerance=1.0))
        rep = dataset_stats(ds)
        for panel in "abc":
            assert set(rep.panel(panel).values()) == {0.0}

    def test_hand_count(self):
        scene, _ = labelled(SCRIPTED[0][1])   # woman 0 present 8 frames, mistaken in 3
        from mistaken_lab.generator import Dataset
        rep = dataset_stats(Dataset([scene], {}))
        assert rep.panel("a")["0"] == pytest.approx(3 / 8)
        assert rep.panel("a")["1"] == 0.0
        assert len(rep.points()) == 8 + 3

    def test_later_frames_more_mistaken(self, dataset_1213):
        curve = dataset_stats(dataset_1213).panel("c")
        values = [curve[str(t)] for t in range(8)]
        assert values[0] == 0.0
        assert np.mean(values[4:]) > np.mean(values[:4])
        assert all(values[t + 1] >= values[t] for t in range(5))
