import json
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embscene.gridscene import (ALL_ACTIONS, N_ACTIONS, STOP, STOP_ACTION, Action, GenerationFailed,
                                InfeasibleAction, Pose, SceneFormatError, SceneGenConfig, VisibilityConfig,
                                action_from_index, action_index, apply_action, empty_scene, enumerate_viewpoints,
                                feasible_actions, generate_scene, is_valid_pose, line_of_sight, load_scene,
                                scene_to_dict, scene_to_json, validate_scene, visible_objects)

from conftest import make_scene


def test_action_indexing_roundtrip():
    assert N_ACTIONS == 72
    assert STOP == 0 and STOP_ACTION == Action(None, 0) and STOP_ACTION.is_stop
    for i in range(N_ACTIONS):
        a = action_from_index(i)
        assert action_index(a.move, a.rot) == i == a.index
    assert len({a.move for a in ALL_ACTIONS}) == 9
    assert len({a.rot for a in ALL_ACTIONS}) == 8
    with pytest.raises(ValueError):
        action_from_index(72)


def test_move_then_rotate():
    s = empty_scene(5, 5)
    assert apply_action(s, Pose(2, 2, 0), Action(2, 2)) == Pose(3, 2, 2)


def test_stop_is_identity():
    s = empty_scene(5, 5)
    a = Action(None, 0)
    assert apply_action(s, Pose(2, 2, 5), a) == Pose(2, 2, 5)
    assert a.is_stop


def test_blocked_move_raises():
    s = make_scene(5, 5, blocked=[(2, 3)])
    with pytest.raises(InfeasibleAction):
        apply_action(s, Pose(2, 2, 0), Action(0, 7))


def test_moves_follow_heading():
    s = empty_scene(5, 5)
    # forward while facing +x goes to +x; "right" while facing +y goes to +x
    assert apply_action(s, Pose(2, 2, 2), Action(0, 0)) == Pose(3, 2, 2)
    assert apply_action(s, Pose(2, 2, 0), Action(2, 0)) == Pose(3, 2, 0)
    assert apply_action(s, Pose(2, 2, 4), Action(0, 0)) == Pose(2, 1, 4)
    assert apply_action(s, Pose(2, 2, 1), Action(0, 0)) == Pose(3, 3, 1)


def test_out_of_bounds_raises():
    s = empty_scene(3, 3)
    with pytest.raises(InfeasibleAction):
        apply_action(s, Pose(0, 0, 4), Action(0, 0))


def test_interior_pose_all_feasible():
    s = empty_scene(5, 5)
    assert feasible_actions(s, Pose(2, 2, 3)).sum() == 72


def test_dead_end_mask():
    # 3x3 with only the column x=1 open; (1,0) has a single open neighbour
    s = make_scene(3, 3, blocked=[(0, 0), (2, 0), (0, 1), (2, 1), (0, 2), (2, 2)])
    for h in range(8):
        mask = feasible_actions(s, Pose(1, 0, h))
        assert mask.sum() == 16
        assert mask[STOP]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 200))
def test_feasible_actions_apply_cleanly(seed, k):
    scene = generate_scene(SceneGenConfig("kitchen", 5, 7, 1, 4), seed % 50)
    poses = enumerate_viewpoints(scene)
    pose = poses[k % len(poses)]
    mask = feasible_actions(scene, pose)
    assert mask[:8].all()
    for a in np.flatnonzero(mask):
        nxt = apply_action(scene, pose, ALL_ACTIONS[a])
        assert is_valid_pose(scene, nxt)
    for a in np.flatnonzero(~mask):
        with pytest.raises(InfeasibleAction):
            apply_action(scene, pose, ALL_ACTIONS[a])


def test_viewpoint_counts():
    assert len(enumerate_viewpoints(empty_scene(3, 3))) == 72
    assert len(enumerate_viewpoints(make_scene(3, 3, blocked=[(1, 1)]))) == 64
    scene = generate_scene(SceneGenConfig("bedroom", 5, 5, 1, 3), 4)
    poses = enumerate_viewpoints(scene)
    assert len(poses) == 8 * int((~scene.obstacle).sum())
    assert len(set(poses)) == len(poses)
    assert poses == enumerate_viewpoints(scene)
    keys = [(p.y, p.x, p.h) for p in poses]
    assert keys == sorted(keys)


def test_line_of_sight_examples():
    s = empty_scene(7, 3)
    assert line_of_sight(s, (2, 1), (2, 1))
    assert line_of_sight(s, (0, 1), (6, 1))
    blocked = make_scene(7, 3, blocked=[(3, 1)])
    assert not line_of_sight(blocked, (0, 1), (6, 1))


def test_own_footprint_does_not_block():
    s = make_scene(7, 3, objects=[("couch", [(4, 1), (5, 1)])])
    assert line_of_sight(s, (0, 1), (5, 1))


def test_visible_objects_examples():
    s = make_scene(7, 7, objects=[("couch", [(3, 5)])])
    seen = visible_objects(s, Pose(3, 3, 0))
    assert len(seen) == 1 and seen[0].distance == 2.0 and seen[0].bearing == 0.0
    assert visible_objects(s, Pose(3, 3, 4)) == []
    far = make_scene(3, 14, objects=[("couch", [(1, 12)])])
    vis = VisibilityConfig(90.0, 10.0)
    assert visible_objects(far, Pose(1, 1, 0), vis) == []
    assert len(visible_objects(far, Pose(1, 2, 0), vis)) == 1


def test_visible_objects_sorted_by_distance():
    s = make_scene(9, 9, objects=[("couch", [(2, 8)]), ("lamp", [(4, 6)]), ("rug", [(5, 6)])])
    seen = visible_objects(s, Pose(4, 3, 0))
    assert [o.obj.category for o in seen] == ["lamp", "rug", "couch"]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 40), st.integers(0, 500), st.floats(1.0, 8.0))
def test_visibility_monotone_in_range(seed, k, r):
    scene = generate_scene(SceneGenConfig("living_room", 6, 9, 2, 6), seed)
    poses = enumerate_viewpoints(scene)
    pose = poses[k % len(poses)]
    near = {s.obj.id for s in visible_objects(scene, pose, VisibilityConfig(90.0, r))}
    far = {s.obj.id for s in visible_objects(scene, pose, VisibilityConfig(90.0, r + 2.0))}
    assert near <= far


def _four_connected(scene):
    free = list(zip(*np.nonzero(~scene.obstacle)))
    start = free[0]
    seen = {start}
    q = deque([start])
    while q:
        y, x = q.popleft()
        for dy, dx in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            ny, nx = y + dy, x + dx
            if 0 <= ny < scene.height and 0 <= nx < scene.width and not scene.obstacle[ny, nx] \
                    and (ny, nx) not in seen:
                seen.add((ny, nx))
                q.append((ny, nx))
    return len(seen) == len(free)


def test_generated_scenes_satisfy_invariants():
    for i in range(200):
        room = ("living_room", "kitchen", "bedroom", "bathroom")[i % 4]
        scene = generate_scene(SceneGenConfig(room), i)
        validate_scene(scene)
        assert _four_connected(scene)
        cells = [c for o in scene.objects for c in o.footprint]
        assert len(cells) == len(set(cells))
        assert all(scene.obstacle[y, x] for x, y in cells)
        assert 5 <= len(scene.objects) <= 8


def test_generation_deterministic():
    cfg = SceneGenConfig("kitchen")
    assert scene_to_json(generate_scene(cfg, 7)) == scene_to_json(generate_scene(cfg, 7))
    assert scene_to_json(generate_scene(cfg, 7)) != scene_to_json(generate_scene(cfg, 8))


def test_zero_objects():
    scene = generate_scene(SceneGenConfig("bathroom", 5, 5, 0, 0), 1)
    assert scene.objects == ()


def test_generation_failure_is_bounded():
    with pytest.raises(GenerationFailed):
        generate_scene(SceneGenConfig("kitchen", 3, 3, 9, 9, 2, max_retries=3), 0)


def test_json_roundtrip(small_scenes):
    for scene in small_scenes:
        again = load_scene(scene_to_json(scene))
        assert again == scene
        assert scene_to_json(again) == scene_to_json(scene)


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d.pop("width"), "width"),
    (lambda d: d.update(width="7"), "width"),
    (lambda d: d["objects"][0].update(salience=1.5), "objects[0].salience"),
    (lambda d: d["objects"][0]["footprint"].append([99, 99]), "objects[0].footprint"),
    (lambda d: d.update(obstacles=[]), "objects[0].footprint"),
    (lambda d: d.update(room_type="garage"), "room_type"),
])
def test_loader_diagnostics(small_scenes, mutate, field):
    doc = scene_to_dict(small_scenes[0])
    mutate(doc)
    with pytest.raises(SceneFormatError, match=field.replace("[", r"\[").replace("]", r"\]")):
        load_scene(json.dumps(doc))


def test_loader_reports_json_line():
    with pytest.raises(SceneFormatError, match="line 2"):
        load_scene('{"width": 3,\n "height": }')


def test_loader_rejects_disconnected():
    doc = scene_to_dict(make_scene(5, 5, blocked=[(2, y) for y in range(5)]))
    with pytest.raises(SceneFormatError, match="connected"):
        load_scene(json.dumps(doc))


def test_loader_checks_categories(small_scenes, lex):
    doc = scene_to_dict(small_scenes[0])
    doc["objects"][0]["category"] = "spaceship"
    with pytest.raises(SceneFormatError, match="category"):
        load_scene(json.dumps(doc), lex)
