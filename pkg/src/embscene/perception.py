"""Synthetic detector and caption oracle.

All randomness is drawn from a generator keyed by (scene seed, episode seed,
pose), so revisiting a pose reproduces its observation exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .gridscene import Pose, Scene, SceneObject, VisibilityConfig, bearing_to, visible_cells, visible_objects
from .lexicon import Lexicon

Box = tuple[float, float, float, float]

FALLBACK_CAPTION = ("a", "wall", "with", "a", "wall")
SPURIOUS_CONFIDENCE = 0.3
FULL_FRAME: Box = (0.0, 0.0, 1.0, 1.0)

MODES = ("caption", "dense")


class NotVisible(Exception):
    pass


@dataclass(frozen=True)
class NoiseConfig:
    p_miss: float = 0.1
    p_fp: float = 0.05
    p_sub: float = 0.1
    p_omit: float = 0.05
    k_caption: int = 3
    episode_seed: int = 0

    def __post_init__(self):
        for name in ("p_miss", "p_fp", "p_sub", "p_omit"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} is not a probability")
        if self.k_caption < 1:
            raise ValueError("k_caption must be >= 1")

    def with_seed(self, episode_seed: int) -> "NoiseConfig":
        return NoiseConfig(self.p_miss, self.p_fp, self.p_sub, self.p_omit, self.k_caption, episode_seed)


NOISELESS = NoiseConfig(0.0, 0.0, 0.0, 0.0)


class Detection(NamedTuple):
    category: str
    confidence: float
    box: Box
    source: int | None = None  # object id; None for spurious detections


class CaptionBox(NamedTuple):
    box: Box
    confidence: float


@dataclass(frozen=True)
class Observation:
    pose: Pose
    detections: tuple[Detection, ...]
    caption: tuple[str, ...]
    caption_boxes: tuple[CaptionBox, ...] | None = None

    def to_dict(self) -> dict:
        doc = {
            "pose": list(self.pose),
            "detections": [
                {"category": d.category, "confidence": d.confidence, "box": list(d.box), "source": d.source}
                for d in self.detections
            ],
            "caption": " ".join(self.caption),
        }
        if self.caption_boxes is not None:
            doc["caption_boxes"] = [{"box": list(b.box), "confidence": b.confidence} for b in self.caption_boxes]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _rng(scene: Scene, pose: Pose, noise: NoiseConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([scene.seed, noise.episode_seed, pose.x, pose.y, pose.h, stream])


def base_confidence(salience: float, distance: float, r_vis: float) -> float:
    return salience * max(0.0, 1.0 - distance / r_vis)


def bearing_span_to_x(lo: float, hi: float, fov_deg: float) -> tuple[float, float]:
    half = fov_deg / 2.0
    x0 = (lo + half) / fov_deg
    x1 = (hi + half) / fov_deg
    return min(max(x0, 0.0), 1.0), min(max(x1, 0.0), 1.0)


def box_height(distance: float) -> float:
    return min(1.0, 1.0 / (1.0 + distance))


def project_box(scene: Scene, pose: Pose, obj: SceneObject, vis: VisibilityConfig = VisibilityConfig()) -> Box:
    cells = visible_cells(scene, pose, obj, vis)
    if not cells:
        raise NotVisible(f"object {obj.id} is not visible from {tuple(pose)}")
    # each cell subtends its own angular width, so single cells get a box
    lo, hi = math.inf, -math.inf
    for cell in obj.footprint:
        dist, bear = bearing_to(pose, cell)
        half_w = math.degrees(math.atan2(0.5, dist)) if dist > 0 else vis.fov_deg / 2.0
        lo = min(lo, bear - half_w)
        hi = max(hi, bear + half_w)
    x0, x1 = bearing_span_to_x(lo, hi, vis.fov_deg)
    nearest = min(c[1] for c in cells)
    height = box_height(nearest)
    return (x0, 0.5 - height / 2.0, x1, 0.5 + height / 2.0)


def _random_box(rng: np.random.Generator) -> Box:
    x0, x1 = sorted(rng.uniform(0.0, 1.0, size=2))
    y0, y1 = sorted(rng.uniform(0.0, 1.0, size=2))
    if x1 - x0 < 0.05:
        x0, x1 = max(0.0, x0 - 0.05), min(1.0, x1 + 0.05)
    if y1 - y0 < 0.05:
        y0, y1 = max(0.0, y0 - 0.05), min(1.0, y1 + 0.05)
    return (float(x0), float(y0), float(x1), float(y1))


def detect(scene: Scene, pose: Pose, lex: Lexicon, noise: NoiseConfig,
           vis: VisibilityConfig = VisibilityConfig()) -> list[Detection]:
    rng = _rng(scene, pose, noise, 0)
    sightings = visible_objects(scene, pose, vis)
    keep = rng.uniform(size=len(sightings)) >= noise.p_miss
    out = []
    for s, k in zip(sightings, keep):
        if k:
            conf = base_confidence(s.obj.salience, s.distance, vis.r_vis)
            out.append(Detection(s.obj.category, conf, project_box(scene, pose, s.obj, vis), s.obj.id))
    u_fp = rng.uniform()
    fp_cat = lex.categories[int(rng.integers(lex.n_categories))]
    fp_box = _random_box(rng)
    if u_fp < noise.p_fp:
        out.append(Detection(fp_cat, SPURIOUS_CONFIDENCE, fp_box, None))
    return out


def _caption_with_sources(scene: Scene, pose: Pose, detections, lex: Lexicon, noise: NoiseConfig):
    """Caption tokens plus, per emitted noun, the index of its source detection
    (None when the noun was substituted)."""
    if not detections:
        return FALLBACK_CAPTION, [None, None]
    rng = _rng(scene, pose, noise, 1)
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].confidence, i))
    chosen: list[int] = []
    seen = set()
    for i in order:
        if detections[i].category not in seen:
            seen.add(detections[i].category)
            chosen.append(i)
        if len(chosen) == noise.k_caption:
            break
    nouns = lex.nouns
    emitted: list[tuple[str, int | None]] = []
    for i in chosen:
        u_omit, u_sub = rng.uniform(size=2)
        alt = int(rng.integers(len(nouns) - 1))
        if u_omit < noise.p_omit:
            continue
        word = detections[i].category
        if u_sub < noise.p_sub:
            others = [w for w in nouns if w != word]
            emitted.append((others[alt], None))
        else:
            emitted.append((word, i))
    if not emitted:
        return FALLBACK_CAPTION, [None, None]
    tokens = ["a", scene.room_type, "with", "a", emitted[0][0]]
    for word, _ in emitted[1:]:
        tokens += ["and", "a", word]
    return tuple(tokens), [src for _, src in emitted]


def caption(scene: Scene, pose: Pose, detections, lex: Lexicon, noise: NoiseConfig) -> tuple[str, ...]:
    return _caption_with_sources(scene, pose, detections, lex, noise)[0]


def observe(scene: Scene, pose: Pose, lex: Lexicon, noise: NoiseConfig, mode: str = "caption",
            vis: VisibilityConfig = VisibilityConfig()) -> Observation:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    dets = tuple(detect(scene, pose, lex, noise, vis))
    tokens, sources = _caption_with_sources(scene, pose, dets, lex, noise)
    boxes = None
    if mode == "dense":
        rng = _rng(scene, pose, noise, 2)
        real = [d for d in dets if d.source is not None]
        boxes = []
        for src in sources:
            pick = int(rng.integers(max(len(real), 1)))
            if src is not None:
                boxes.append(CaptionBox(dets[src].box, dets[src].confidence))
            elif real:
                boxes.append(CaptionBox(real[pick].box, SPURIOUS_CONFIDENCE))
            elif dets:
                boxes.append(CaptionBox(dets[0].box, SPURIOUS_CONFIDENCE))
            else:
                boxes.append(CaptionBox(FULL_FRAME, SPURIOUS_CONFIDENCE))
        boxes = tuple(boxes)
    return Observation(pose, dets, tokens, boxes)
