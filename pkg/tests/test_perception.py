import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embscene.gridscene import Pose, SceneGenConfig, enumerate_viewpoints, generate_scene
from embscene.perception import (FALLBACK_CAPTION, NOISELESS, SPURIOUS_CONFIDENCE, Detection, NoiseConfig,
                                 NotVisible, base_confidence, bearing_span_to_x, caption, detect, observe, project_box)

from embscene.lexicon import build_lexicon

from conftest import make_scene

LEX = build_lexicon(0)


def living(objects, w=7, h=7):
    return make_scene(w, h, objects=objects, room_type="living_room", seed=3)


def test_empty_view_no_detections(lex):
    s = living([])
    assert detect(s, Pose(3, 3, 0), lex, NoiseConfig(p_fp=0.0)) == []


def test_adjacent_full_salience_confidence(lex):
    # nearest cell centre is one step ahead; salience 1 over R_vis 10 gives 0.9
    s = living([("couch", [(3, 4)])])
    dets = detect(s, Pose(3, 3, 0), lex, NOISELESS)
    assert len(dets) == 1 and dets[0].confidence == pytest.approx(0.9)
    assert base_confidence(1.0, 0.0, 10.0) == 1.0


def test_miss_all(lex):
    s = living([("couch", [(3, 5)]), ("lamp", [(2, 5)])])
    for pose in enumerate_viewpoints(s):
        assert [d for d in detect(s, pose, lex, NoiseConfig(1.0, 0.0, 0.0, 0.0)) if d.source is not None] == []


def test_spurious_detection(lex):
    s = living([])
    dets = detect(s, Pose(3, 3, 0), lex, NoiseConfig(0.0, 1.0, 0.0, 0.0))
    assert len(dets) == 1 and dets[0].confidence == SPURIOUS_CONFIDENCE and dets[0].source is None
    assert lex.is_category(dets[0].category)


def test_caption_template(lex):
    s = living([])
    dets = [Detection("couch", 0.9, (0, 0, 1, 1)), Detection("table", 0.8, (0, 0, 1, 1))]
    assert " ".join(caption(s, Pose(3, 3, 0), dets, lex, NOISELESS)) == "a living_room with a couch and a table"
    assert caption(s, Pose(3, 3, 0), [], lex, NOISELESS) == FALLBACK_CAPTION


def test_caption_uses_top_k_distinct(lex):
    s = living([])
    dets = [Detection(c, conf, (0, 0, 1, 1)) for c, conf in
            [("lamp", 0.2), ("couch", 0.9), ("couch", 0.85), ("rug", 0.5), ("vase", 0.6)]]
    assert lex.extract_nouns(caption(s, Pose(3, 3, 0), dets, lex, NOISELESS)) == ["couch", "vase", "rug"]


def test_substitution_always(lex):
    s = living([])
    dets = [Detection("couch", 0.9, (0, 0, 1, 1)), Detection("table", 0.8, (0, 0, 1, 1))]
    for h in range(8):
        nouns = lex.extract_nouns(caption(s, Pose(3, 3, h), dets, lex, NoiseConfig(0, 0, 1.0, 0)))
        assert nouns[0] != "couch" and nouns[1] != "table"


def test_omit_all_falls_back(lex):
    s = living([])
    dets = [Detection("couch", 0.9, (0, 0, 1, 1))]
    assert caption(s, Pose(3, 3, 0), dets, lex, NoiseConfig(0, 0, 0, 1.0)) == FALLBACK_CAPTION


def test_bearing_span_map():
    x0, x1 = bearing_span_to_x(-10.0, 10.0, 90.0)
    assert x0 == pytest.approx(35 / 90) and x1 == pytest.approx(55 / 90)
    assert round(x0, 3) == 0.389 and round(x1, 3) == 0.611


def test_project_box_properties(lex):
    s = living([("couch", [(3, 5)]), ("lamp", [(0, 6)])])
    box = project_box(s, Pose(3, 3, 0), s.objects[0])
    assert box[0] < 0.5 < box[2]
    assert box[3] - box[1] == pytest.approx(1.0 / 3.0)
    other = project_box(s, Pose(3, 3, 0), s.objects[1])
    assert other[2] <= box[0] or box[2] <= other[0]
    with pytest.raises(NotVisible):
        project_box(s, Pose(3, 3, 4), s.objects[0])


def test_dense_mode_boxes(lex):
    s = living([("couch", [(3, 5)]), ("lamp", [(4, 5)])])
    obs = observe(s, Pose(3, 3, 0), lex, NOISELESS, "dense")
    assert len(obs.caption_boxes) == len(lex.extract_nouns(obs.caption)) == 2
    assert observe(s, Pose(3, 3, 0), lex, NOISELESS, "caption").caption_boxes is None
    with pytest.raises(ValueError):
        observe(s, Pose(3, 3, 0), lex, NOISELESS, "stereo")


def test_noiseless_caption_nouns_are_detected(lex):
    for seed in range(10):
        scene = generate_scene(SceneGenConfig("bedroom", 6, 8, 2, 6), seed)
        for pose in enumerate_viewpoints(scene)[::7]:
            obs = observe(scene, pose, lex, NOISELESS)
            cats = {d.category for d in obs.detections}
            for w in lex.extract_nouns(obs.caption):
                assert w in cats or (w == "wall" and not cats)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 30), st.integers(0, 10**6), st.integers(0, 10**4))
def test_observation_deterministic(scene_seed, ep_seed, k):
    lex = LEX
    scene = generate_scene(SceneGenConfig("kitchen", 6, 8, 2, 6), scene_seed)
    pose = enumerate_viewpoints(scene)[k % (8 * int((~scene.obstacle).sum()))]
    noise = NoiseConfig().with_seed(ep_seed)
    a = observe(scene, pose, lex, noise, "dense")
    b = observe(scene, pose, lex, noise, "dense")
    assert a == b and a.to_json() == b.to_json()
    for d in a.detections:
        x0, y0, x1, y1 = d.box
        assert 0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0
        assert 0.0 <= d.confidence <= 1.0


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(p_miss=1.5)
    with pytest.raises(ValueError):
        NoiseConfig(k_caption=0)
