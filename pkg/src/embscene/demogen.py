"""Shortest-path demonstrations toward high-scoring viewpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .gridscene import (ALL_ACTIONS, STOP_ACTION, Action, Pose, Scene, action_from_index,
                        apply_action, enumerate_viewpoints, feasible_actions)
from .lexicon import Lexicon
from .perception import NoiseConfig
from .scoring import ScoreMap, ScoringConfig, score_map

INF = int(_kernels.INF_STEPS)


class DegenerateScene(Exception):
    pass


class Unreachable(Exception):
    pass


@dataclass(frozen=True)
class PathTables:
    poses: tuple[Pose, ...]
    dist: np.ndarray  # int32 step counts, INF when unreachable
    next: np.ndarray  # successor node index on a shortest path, -1 if none
    edge_action: dict  # (u, v) -> action index

    def index(self, pose: Pose) -> int:
        return self._lookup[pose]

    def __post_init__(self):
        object.__setattr__(self, "_lookup", {p: i for i, p in enumerate(self.poses)})

    def distance(self, a: Pose, b: Pose) -> float:
        d = int(self.dist[self.index(a), self.index(b)])
        return float("inf") if d >= INF else d


def pose_graph(scene: Scene) -> tuple[tuple[Pose, ...], dict]:
    """Nodes and unit edges u -> v for every feasible non-Stop action."""
    poses = tuple(enumerate_viewpoints(scene))
    lookup = {p: i for i, p in enumerate(poses)}
    edges = {}
    for u, p in enumerate(poses):
        mask = feasible_actions(scene, p)
        for a in np.flatnonzero(mask[1:]) + 1:
            v = lookup[apply_action(scene, p, ALL_ACTIONS[a])]
            edges.setdefault((u, v), int(a))
    return poses, edges


def floyd_warshall(scene: Scene) -> PathTables:
    poses, edges = pose_graph(scene)
    n = len(poses)
    dist = np.full((n, n), INF, dtype=np.int32)
    nxt = np.full((n, n), -1, dtype=np.int64)
    np.fill_diagonal(dist, 0)
    idx = np.arange(n)
    nxt[idx, idx] = idx
    if edges:
        us, vs = np.array(list(edges)).T
        dist[us, vs] = 1
        nxt[us, vs] = vs
    dist, nxt = _kernels.floyd_warshall(dist, nxt)
    return PathTables(poses, dist, nxt, edges)


def shortest_path_actions(tables: PathTables, start: Pose, goal: Pose) -> list[Action]:
    u, v = tables.index(start), tables.index(goal)
    if tables.dist[u, v] >= INF:
        raise Unreachable(f"{tuple(goal)} is unreachable from {tuple(start)}")
    actions = []
    while u != v:
        w = int(tables.next[u, v])
        actions.append(action_from_index(tables.edge_action[(u, w)]))
        u = w
    actions.append(STOP_ACTION)
    return actions


def sample_target(smap: ScoreMap, gamma: float, rng) -> Pose:
    if smap.s_max <= 0.0:
        raise DegenerateScene(f"scene {smap.scene_id} has s_max = 0")
    rng = np.random.default_rng(rng)
    band = np.flatnonzero(smap.scores >= gamma * smap.s_max)
    return smap.poses[int(band[rng.integers(len(band))])]


@dataclass(frozen=True)
class Demonstration:
    scene_id: str
    start: Pose
    target: Pose
    actions: tuple[Action, ...]
    poses: tuple[Pose, ...]
    noise_seed: int = 0

    def __len__(self):
        return len(self.actions)

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "start": list(self.start),
            "target": list(self.target),
            "actions": [a.index for a in self.actions],
            "poses": [list(p) for p in self.poses],
            "noise_seed": self.noise_seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Demonstration":
        return cls(doc["scene_id"], Pose(*doc["start"]), Pose(*doc["target"]),
                   tuple(action_from_index(a) for a in doc["actions"]),
                   tuple(Pose(*p) for p in doc["poses"]), int(doc.get("noise_seed", 0)))


def check_demo(scene: Scene, demo: Demonstration, t_max: int | None = None) -> None:
    if not demo.actions or not demo.actions[-1].is_stop:
        raise ValueError("demonstration must end with Stop")
    if len(demo.poses) != len(demo.actions) or demo.poses[0] != demo.start:
        raise ValueError("poses must align with actions and begin at start")
    if t_max is not None and len(demo.actions) > t_max:
        raise ValueError("demonstration longer than T_max")
    pose = demo.start
    for t, a in enumerate(demo.actions):
        if demo.poses[t] != pose:
            raise ValueError(f"pose mismatch at step {t}")
        if not feasible_actions(scene, pose)[a.index]:
            raise ValueError(f"infeasible action at step {t}")
        pose = apply_action(scene, pose, a)
    if pose != demo.target:
        raise ValueError("replay does not end at target")


def demos_to_jsonl(demos) -> str:
    return "".join(json.dumps(d.to_dict(), sort_keys=True) + "\n" for d in demos)


def demos_from_jsonl(text: str) -> list[Demonstration]:
    return [Demonstration.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


@dataclass(frozen=True)
class DemoConfig:
    gamma: float = 0.95
    per_scene: int = 4
    t_max: int = 40
    max_retries: int = 50
    target_per_demo: bool = False  # resample the gamma-band target for every demo


def make_demos(scenes, lex: Lexicon, scoring: ScoringConfig, noise: NoiseConfig, cfg: DemoConfig, seed: int,
               smaps: dict | None = None) -> list[Demonstration]:
    demos = []
    for scene in scenes:
        rng = np.random.default_rng([seed, scene.seed, 0xDE])
        smap = smaps[scene.id] if smaps and scene.id in smaps else score_map(scene, lex, scoring, noise)
        target = sample_target(smap, cfg.gamma, rng)
        tables = floyd_warshall(scene)
        for _ in range(cfg.per_scene):
            if cfg.target_per_demo:
                target = sample_target(smap, cfg.gamma, rng)
            t_idx = tables.index(target)
            for _ in range(cfg.max_retries):
                start = tables.poses[int(rng.integers(len(tables.poses)))]
                noise_seed = int(rng.integers(2**31))
                d = int(tables.dist[tables.index(start), t_idx])
                if d >= INF or d + 1 > cfg.t_max:
                    continue
                actions = shortest_path_actions(tables, start, target)
                poses = [start]
                for a in actions[:-1]:
                    poses.append(apply_action(scene, poses[-1], a))
                demos.append(Demonstration(scene.id, start, target, tuple(actions), tuple(poses), noise_seed))
                break
    return demos

