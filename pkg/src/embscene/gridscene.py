"""Discrete scenes, poses, composite actions and visibility geometry.

Grid convention: cell ``(x, y)`` with ``x`` the column and ``y`` the row,
``+y`` is "forward" for heading 0 and headings turn clockwise in 45 degree
steps, so heading 2 faces ``+x``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

ROOM_TYPES = ("living_room", "kitchen", "bedroom", "bathroom")
CELL_SIZE_M = 0.25  # metadata only; all geometry is in cells
N_HEADINGS = 8
N_MOVES = 9
N_ACTIONS = N_MOVES * N_HEADINGS
STOP = 0

# unit steps for headings / move directions 0..7, clockwise from +y
DIRECTIONS = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))


class SceneError(Exception):
    pass


class InfeasibleAction(SceneError):
    pass


class GenerationFailed(SceneError):
    pass


class SceneFormatError(SceneError):
    """Raised by the JSON loader; the message names the offending field."""


class Pose(NamedTuple):
    x: int
    y: int
    h: int


class Action(NamedTuple):
    """``move`` is None or a direction 0..7 relative to the current heading
    (0 = forward, 2 = right, 4 = back); ``rot`` is the clockwise turn 0..7,
    applied after the move."""

    move: int | None
    rot: int

    @property
    def index(self) -> int:
        return action_index(self.move, self.rot)

    @property
    def is_stop(self) -> bool:
        return self.move is None and self.rot == 0


def action_index(move: int | None, rot: int) -> int:
    return (0 if move is None else move + 1) * N_HEADINGS + rot


def action_from_index(idx: int) -> Action:
    if not 0 <= idx < N_ACTIONS:
        raise ValueError(f"action index out of range: {idx}")
    m, rot = divmod(int(idx), N_HEADINGS)
    return Action(None if m == 0 else m - 1, rot)


ALL_ACTIONS = tuple(action_from_index(i) for i in range(N_ACTIONS))
STOP_ACTION = ALL_ACTIONS[STOP]


@dataclass(frozen=True)
class SceneObject:
    id: int
    category: str
    footprint: tuple[tuple[int, int], ...]
    salience: float


@dataclass(frozen=True, eq=False)
class Scene:
    width: int
    height: int
    obstacle: np.ndarray  # bool, shape (height, width), indexed [y, x]
    objects: tuple[SceneObject, ...]
    room_type: str
    seed: int
    _owner: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        obstacle = np.array(self.obstacle, dtype=bool)
        obstacle.setflags(write=False)
        object.__setattr__(self, "obstacle", obstacle)
        owner = np.full((self.height, self.width), -1, dtype=np.int64)
        for k, obj in enumerate(self.objects):
            for x, y in obj.footprint:
                if 0 <= x < self.width and 0 <= y < self.height:
                    owner[y, x] = k
        owner.setflags(write=False)
        object.__setattr__(self, "_owner", owner)

    @property
    def id(self) -> str:
        return f"{self.room_type}-{self.seed}"

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and not self.obstacle[y, x]

    def owner_of(self, x: int, y: int) -> SceneObject | None:
        k = self._owner[y, x]
        return None if k < 0 else self.objects[k]

    def free_cells(self) -> list[tuple[int, int]]:
        ys, xs = np.nonzero(~self.obstacle)
        return [(int(x), int(y)) for y, x in zip(ys, xs)]

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return scene_to_json(self) == scene_to_json(other)

    def __hash__(self):
        return hash(scene_to_json(self))


def validate_scene(scene: Scene) -> None:
    """Raise SceneFormatError if ``scene`` breaks any structural invariant."""
    if scene.width < 3 or scene.height < 3:
        raise SceneFormatError(f"width/height: scene must be at least 3x3, got {scene.width}x{scene.height}")
    if scene.obstacle.shape != (scene.height, scene.width):
        raise SceneFormatError("obstacles: grid shape does not match width/height")
    if scene.room_type not in ROOM_TYPES:
        raise SceneFormatError(f"room_type: unknown room type {scene.room_type!r}")
    seen: dict[tuple[int, int], int] = {}
    ids = set()
    for k, obj in enumerate(scene.objects):
        where = f"objects[{k}]"
        if obj.id in ids:
            raise SceneFormatError(f"{where}.id: duplicate object id {obj.id}")
        ids.add(obj.id)
        if not obj.footprint:
            raise SceneFormatError(f"{where}.footprint: empty footprint")
        if not 0.0 < obj.salience <= 1.0:
            raise SceneFormatError(f"{where}.salience: {obj.salience} not in (0, 1]")
        for x, y in obj.footprint:
            if not scene.in_bounds(x, y):
                raise SceneFormatError(f"{where}.footprint: cell ({x}, {y}) out of bounds")
            if not scene.obstacle[y, x]:
                raise SceneFormatError(f"{where}.footprint: cell ({x}, {y}) is not an obstacle")
            if (x, y) in seen:
                raise SceneFormatError(
                    f"{where}.footprint: cell ({x}, {y}) overlaps objects[{seen[(x, y)]}]"
                )
            seen[(x, y)] = k
    free = scene.free_cells()
    if not free:
        raise SceneFormatError("obstacles: scene has no free cell")
    if len(_reachable_cells(scene.obstacle, free[0])) != len(free):
        raise SceneFormatError("obstacles: free cells are not 4-connected")


def _reachable_cells(obstacle: np.ndarray, start: tuple[int, int]) -> set[tuple[int, int]]:
    h, w = obstacle.shape
    seen = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and not obstacle[ny, nx] and (nx, ny) not in seen:
                seen.add((nx, ny))
                queue.append((nx, ny))
    return seen


def empty_scene(width: int, height: int, room_type: str = "living_room", seed: int = 0) -> Scene:
    return Scene(width, height, np.zeros((height, width), dtype=bool), (), room_type, seed)


# ------------------------------------------------------------------ kinematics


def is_valid_pose(scene: Scene, pose: Pose) -> bool:
    return scene.is_free(pose.x, pose.y) and 0 <= pose.h < N_HEADINGS


def apply_action(scene: Scene, pose: Pose, a: Action) -> Pose:
    x, y = pose.x, pose.y
    if a.move is not None:
        dx, dy = DIRECTIONS[(a.move + pose.h) % N_HEADINGS]
        x, y = x + dx, y + dy
        if not scene.is_free(x, y):
            raise InfeasibleAction(f"move {a.move} from ({pose.x}, {pose.y}) hits ({x}, {y})")
    return Pose(x, y, (pose.h + a.rot) % N_HEADINGS)


def feasible_actions(scene: Scene, pose: Pose) -> np.ndarray:
    mask = np.zeros(N_ACTIONS, dtype=bool)
    mask[:N_HEADINGS] = True
    for d in range(N_HEADINGS):
        dx, dy = DIRECTIONS[(d + pose.h) % N_HEADINGS]
        if scene.is_free(pose.x + dx, pose.y + dy):
            start = (d + 1) * N_HEADINGS
            mask[start : start + N_HEADINGS] = True
    return mask


def enumerate_viewpoints(scene: Scene) -> list[Pose]:
    """All poses on free cells, row-major over cells then by heading."""
    return [Pose(x, y, h) for x, y in scene.free_cells() for h in range(N_HEADINGS)]


# ------------------------------------------------------------------ visibility


@dataclass(frozen=True)
class VisibilityConfig:
    fov_deg: float = 90.0
    r_vis: float = 10.0


def bresenham(a: tuple[int, int], b: tuple[int, int]) -> list[tuple[int, int]]:
    (x0, y0), (x1, y1) = a, b
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    cells = []
    while True:
        cells.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return cells
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def line_of_sight(scene: Scene, a: tuple[int, int], b: tuple[int, int]) -> bool:
    target = scene._owner[b[1], b[0]]
    for x, y in bresenham(a, b)[1:-1]:
        if scene.obstacle[y, x] and (target < 0 or scene._owner[y, x] != target):
            return False
    return True


def bearing_to(pose: Pose, cell: tuple[int, int]) -> tuple[float, float]:
    """(distance, bearing) from pose to a cell centre; bearing in (-180, 180],
    positive clockwise of the heading."""
    dx, dy = cell[0] - pose.x, cell[1] - pose.y
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return 0.0, 0.0
    absolute = math.degrees(math.atan2(dx, dy))
    rel = (absolute - 45.0 * pose.h) % 360.0
    if rel > 180.0:
        rel -= 360.0
    return dist, rel


class Sighting(NamedTuple):
    obj: SceneObject
    distance: float
    bearing: float


def visible_cells(scene: Scene, pose: Pose, obj: SceneObject, vis: VisibilityConfig) -> list[tuple[tuple[int, int], float, float]]:
    half = vis.fov_deg / 2.0
    out = []
    for cell in obj.footprint:
        dist, bear = bearing_to(pose, cell)
        if dist <= vis.r_vis and abs(bear) <= half and line_of_sight(scene, (pose.x, pose.y), cell):
            out.append((cell, dist, bear))
    return out


def visible_objects(scene: Scene, pose: Pose, vis: VisibilityConfig = VisibilityConfig()) -> list[Sighting]:
    found = []
    for obj in scene.objects:
        cells = visible_cells(scene, pose, obj, vis)
        if cells:
            _, dist, bear = min(cells, key=lambda c: (c[1], abs(c[2]), c[0]))
            found.append(Sighting(obj, dist, bear))
    found.sort(key=lambda s: (s.distance, s.obj.id))
    return found


# ------------------------------------------------------------------ generation

ROOM_PROFILES: dict[str, tuple[str, ...]] = {
    "living_room": ("couch", "armchair", "table", "television", "lamp", "bookshelf",
                    "plant", "painting", "rug", "fireplace", "vase", "pillow"),
    "kitchen": ("fridge", "stove", "sink", "microwave", "toaster", "cabinet",
                "kettle", "bowl", "pan", "chair", "table", "oven"),
    "bedroom": ("bed", "dresser", "nightstand", "wardrobe", "mirror", "lamp",
                "clock", "window", "curtain", "pillow", "chair", "laptop"),
    "bathroom": ("toilet", "bathtub", "shower", "towel", "sink", "mirror",
                 "toothbrush", "soap", "basket", "scale", "shelf", "cabinet"),
}


@dataclass(frozen=True)
class SceneGenConfig:
    room_type: str = "living_room"
    min_size: int = 10
    max_size: int = 12
    min_objects: int = 5
    max_objects: int = 8
    max_footprint: int = 2  # side length bound of rectangular footprints
    max_retries: int = 50


def generate_scene(cfg: SceneGenConfig, seed: int) -> Scene:
    if cfg.room_type not in ROOM_PROFILES:
        raise ValueError(f"unknown room type {cfg.room_type!r}")
    rng = np.random.default_rng([seed, ROOM_TYPES.index(cfg.room_type)])
    for _ in range(cfg.max_retries):
        scene = _try_generate(cfg, seed, rng)
        if scene is not None:
            return scene
    raise GenerationFailed(f"could not place objects for seed {seed} after {cfg.max_retries} tries")


def _try_generate(cfg: SceneGenConfig, seed: int, rng: np.random.Generator) -> Scene | None:
    width = int(rng.integers(cfg.min_size, cfg.max_size + 1))
    height = int(rng.integers(cfg.min_size, cfg.max_size + 1))
    n_obj = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    profile = ROOM_PROFILES[cfg.room_type]
    obstacle = np.zeros((height, width), dtype=bool)
    objects: list[SceneObject] = []
    for k in range(n_obj):
        category = profile[int(rng.integers(len(profile)))]
        placed = False
        for _ in range(30):
            w = int(rng.integers(1, cfg.max_footprint + 1))
            h = int(rng.integers(1, cfg.max_footprint + 1))
            x0 = int(rng.integers(0, width - w + 1))
            y0 = int(rng.integers(0, height - h + 1))
            if obstacle[y0 : y0 + h, x0 : x0 + w].any():
                continue
            trial = obstacle.copy()
            trial[y0 : y0 + h, x0 : x0 + w] = True
            ys, xs = np.nonzero(~trial)
            if len(xs) == 0 or len(_reachable_cells(trial, (int(xs[0]), int(ys[0])))) != len(xs):
                continue
            obstacle = trial
            cells = tuple((x, y) for y in range(y0, y0 + h) for x in range(x0, x0 + w))
            salience = round(float(rng.uniform(0.5, 1.0)), 6)
            objects.append(SceneObject(k, category, cells, salience))
            placed = True
            break
        if not placed:
            return None
    scene = Scene(width, height, obstacle, tuple(objects), cfg.room_type, seed)
    validate_scene(scene)
    return scene


# --------------------------------------------------------------- serialisation


def scene_to_dict(scene: Scene) -> dict:
    ys, xs = np.nonzero(scene.obstacle)
    return {
        "width": scene.width,
        "height": scene.height,
        "room_type": scene.room_type,
        "seed": scene.seed,
        "obstacles": [[int(x), int(y)] for y, x in zip(ys, xs)],
        "objects": [
            {"id": o.id, "category": o.category, "footprint": [list(c) for c in o.footprint],
             "salience": o.salience}
            for o in scene.objects
        ],
    }


def scene_to_json(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), sort_keys=True)


def _require(doc: dict, key: str, kind, where: str = ""):
    if key not in doc:
        raise SceneFormatError(f"{where}{key}: missing field")
    val = doc[key]
    if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
        raise SceneFormatError(f"{where}{key}: expected integer, got {val!r}")
    if kind is float and (isinstance(val, bool) or not isinstance(val, (int, float))):
        raise SceneFormatError(f"{where}{key}: expected number, got {val!r}")
    if kind in (str, list) and not isinstance(val, kind):
        raise SceneFormatError(f"{where}{key}: expected {kind.__name__}, got {val!r}")
    return val


def _cell(val, where: str) -> tuple[int, int]:
    if (not isinstance(val, list) or len(val) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in val)):
        raise SceneFormatError(f"{where}: expected [x, y] integer pair, got {val!r}")
    return val[0], val[1]


def scene_from_dict(doc: dict, lexicon=None) -> Scene:
    """Build and validate a scene. With a lexicon, categories must be its nouns."""
    if not isinstance(doc, dict):
        raise SceneFormatError("document: expected a JSON object")
    width = _require(doc, "width", int)
    height = _require(doc, "height", int)
    room_type = _require(doc, "room_type", str)
    seed = _require(doc, "seed", int)
    if width < 3 or height < 3:
        raise SceneFormatError(f"width/height: scene must be at least 3x3, got {width}x{height}")
    obstacle = np.zeros((height, width), dtype=bool)
    for k, raw in enumerate(_require(doc, "obstacles", list)):
        x, y = _cell(raw, f"obstacles[{k}]")
        if not (0 <= x < width and 0 <= y < height):
            raise SceneFormatError(f"obstacles[{k}]: cell ({x}, {y}) out of bounds")
        obstacle[y, x] = True
    objects = []
    for k, raw in enumerate(_require(doc, "objects", list)):
        where = f"objects[{k}]."
        if not isinstance(raw, dict):
            raise SceneFormatError(f"objects[{k}]: expected an object")
        category = _require(raw, "category", str, where)
        if lexicon is not None and not lexicon.is_category(category):
            raise SceneFormatError(f"{where}category: {category!r} is not a known object category")
        cells = tuple(_cell(c, f"{where}footprint[{i}]")
                      for i, c in enumerate(_require(raw, "footprint", list, where)))
        objects.append(SceneObject(_require(raw, "id", int, where), category, cells,
                                   float(_require(raw, "salience", float, where))))
    scene = Scene(width, height, obstacle, tuple(objects), room_type, seed)
    validate_scene(scene)
    return scene


def load_scene(text: str, lexicon=None) -> Scene:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from None
    return scene_from_dict(doc, lexicon)
