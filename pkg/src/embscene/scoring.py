"""Viewpoint scoring: word-pair similarity, maximum matching, sim and score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .gridscene import Pose, Scene, VisibilityConfig, enumerate_viewpoints
from .lexicon import Lexicon
from .perception import NoiseConfig, Observation, observe

ANNOTATION_SEED = 9_001  # episode seed used for score maps and ground truth
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class ScoringConfig:
    lam: float = 0.1
    total_categories: int = 41
    mode: str = "caption"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.total_categories < 1:
            raise ValueError("total_categories must be >= 1")
        if self.mode not in ("caption", "dense"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def for_lexicon(cls, lex: Lexicon, lam: float = 0.1, mode: str = "caption") -> "ScoringConfig":
        return cls(lam, lex.n_categories, mode)


def iou(a, b) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def pair_similarity(lex: Lexicon, det, word: str, mode: str = "caption", word_box=None) -> float:
    """R = k * max(0, cos). ``word_box`` is a CaptionBox, needed in dense mode."""
    c = max(0.0, lex.cosine(det.category, word))
    if mode == "caption":
        return c
    return iou(det.box, word_box.box) * word_box.confidence * c


def _min_cost_assignment(weights: np.ndarray) -> np.ndarray:
    cost = weights.max() - weights if weights.size else weights
    return _kernels.hungarian_min_cost(np.ascontiguousarray(cost, dtype=np.float64))


def _assignment_total(weights: np.ndarray) -> float:
    cols = _min_cost_assignment(weights)
    return float(weights[np.arange(len(cols)), cols].sum())


def hungarian_max_matching(weights) -> tuple[list[tuple[int, int]], float]:
    """Maximum-weight one-to-one matching of size min(n, m).

    Among optimal assignments of the zero-padded square matrix, the
    lexicographically smallest one is returned.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.size == 0:
        return [], 0.0
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    n, m = w.shape
    k = max(n, m)
    sq = np.zeros((k, k))
    sq[:n, :m] = w
    best = _assignment_total(sq)
    tol = _TIE_TOL * max(1.0, abs(best))
    rows = list(range(k))
    cols = list(range(k))
    fixed = []
    acc = 0.0
    for i in range(k):
        rows.remove(i)
        for j in cols:
            rest = [c for c in cols if c != j]
            sub = _assignment_total(sq[np.ix_(rows, rest)]) if rows else 0.0
            if acc + sq[i, j] + sub >= best - tol:
                fixed.append((i, j))
                acc += sq[i, j]
                cols = rest
                break
    pairs = [(i, j) for i, j in fixed if i < n and j < m]
    total = float(sum(w[i, j] for i, j in pairs))
    return pairs, total


def similarity_matrix(obs: Observation, lex: Lexicon, mode: str = "caption", canonical: bool = False) -> np.ndarray:
    """R over detections x caption nouns. ``canonical`` sorts both sides by
    content first, so the matrix does not depend on input order."""
    nouns = lex.extract_nouns(obs.caption)
    dets = list(obs.detections)
    if mode == "caption":
        boxes = [None] * len(nouns)
    else:
        boxes = obs.caption_boxes
        if boxes is None or len(boxes) != len(nouns):
            raise ValueError("dense scoring needs caption_boxes aligned with caption nouns")
        boxes = list(boxes)
    if canonical:
        dets.sort(key=lambda d: (d.category, d.confidence, d.box))
        pairs = sorted(zip(nouns, boxes), key=lambda p: (p[0], () if p[1] is None else (p[1].box, p[1].confidence)))
        nouns, boxes = [p[0] for p in pairs], [p[1] for p in pairs]
    R = np.zeros((len(dets), len(nouns)))
    for i, d in enumerate(dets):
        for j, w in enumerate(nouns):
            R[i, j] = pair_similarity(lex, d, w, mode, boxes[j])
    return R


def sim(obs: Observation, lex: Lexicon, cfg: ScoringConfig) -> float:
    R = similarity_matrix(obs, lex, cfg.mode, canonical=True)
    if R.size == 0:
        return 0.0
    k = max(R.shape)
    sq = np.zeros((k, k))
    sq[: R.shape[0], : R.shape[1]] = R
    return _assignment_total(sq) / k


def n_distinct_categories(obs: Observation) -> int:
    return len({d.category for d in obs.detections})


def viewpoint_score(obs: Observation, lex: Lexicon, cfg: ScoringConfig) -> float:
    return sim(obs, lex, cfg) + cfg.lam * n_distinct_categories(obs) / cfg.total_categories


@dataclass(frozen=True)
class ScoreMap:
    scene_id: str
    poses: tuple[Pose, ...]
    scores: np.ndarray
    s_max: float
    argmax: Pose

    def score_of(self, pose: Pose) -> float:
        return float(self.scores[self.poses.index(pose)])

    def as_dict(self) -> dict[Pose, float]:
        return {p: float(s) for p, s in zip(self.poses, self.scores)}

    def to_csv(self) -> str:
        lines = ["x,y,h,score"]
        lines += [f"{p.x},{p.y},{p.h},{s!r}" for p, s in zip(self.poses, self.scores.tolist())]
        return "\n".join(lines) + "\n"


def annotation_noise(noise: NoiseConfig) -> NoiseConfig:
    return noise.with_seed(ANNOTATION_SEED)


def score_map(scene: Scene, lex: Lexicon, cfg: ScoringConfig, noise: NoiseConfig,
              vis: VisibilityConfig = VisibilityConfig()) -> ScoreMap:
    ann = annotation_noise(noise)
    poses = tuple(enumerate_viewpoints(scene))
    scores = np.array([viewpoint_score(observe(scene, p, lex, ann, cfg.mode, vis), lex, cfg) for p in poses])
    best = int(np.argmax(scores))
    scores.setflags(write=False)
    return ScoreMap(scene.id, poses, scores, float(scores[best]), poses[best])
