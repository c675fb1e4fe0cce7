"""Synthetic word embeddings with synonym structure, plus noun/BoW helpers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .gridscene import ROOM_PROFILES, ROOM_TYPES

STOP_WORDS = ("a", "an", "the", "with", "and", "in", "on", "of", "is", "there")

# extra nouns that share a synonym group with an object category
SYNONYMS = {
    "couch": ("sofa", "settee"),
    "table": ("desk",),
    "television": ("tv",),
    "chair": ("seat", "stool"),
    "lamp": ("light",),
    "fridge": ("refrigerator",),
    "stove": ("cooker",),
    "cabinet": ("cupboard",),
    "bathtub": ("tub",),
    "rug": ("carpet", "mat"),
    "painting": ("picture", "artwork"),
    "plant": ("houseplant",),
    "armchair": ("recliner",),
    "bookshelf": ("bookcase",),
    "pillow": ("cushion",),
    "dresser": ("chest",),
    "wardrobe": ("closet",),
    "curtain": ("drape",),
    "toilet": ("lavatory",),
    "basket": ("hamper",),
    "laptop": ("computer", "notebook"),
    "pan": ("skillet",),
    "bowl": ("dish",),
    "kettle": ("teapot",),
}
# nouns that are never object categories (the fallback caption uses "wall")
EXTRA_NOUNS = ("wall", "floor")

SYNONYM_MIN_COS = 0.8
CROSS_MAX_COS = 0.5


class LexiconError(Exception):
    pass


class UnknownWord(LexiconError, KeyError):
    pass


class ConstructionFailed(LexiconError):
    pass


@dataclass(frozen=True, eq=False)
class Lexicon:
    words: tuple[str, ...]
    vectors: np.ndarray
    is_noun: tuple[bool, ...]
    is_stop: tuple[bool, ...]
    synonym_groups: tuple[tuple[str, ...], ...]
    categories: tuple[str, ...]
    seed: int = 0
    _index: dict = field(init=False, repr=False)
    _group: dict = field(init=False, repr=False)
    _bow_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        vecs = np.array(self.vectors, dtype=float)
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})
        object.__setattr__(self, "_group", {w: g for g, grp in enumerate(self.synonym_groups) for w in grp})
        bow_words = [w for w, s in zip(self.words, self.is_stop) if not s]
        object.__setattr__(self, "_bow_index", {w: i for i, w in enumerate(bow_words)})

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    @property
    def bow_size(self) -> int:
        return len(self._bow_index)

    @property
    def nouns(self) -> tuple[str, ...]:
        return tuple(w for w, n in zip(self.words, self.is_noun) if n)

    def __contains__(self, word) -> bool:
        return word in self._index

    def vector(self, word: str) -> np.ndarray:
        try:
            return self.vectors[self._index[word]]
        except KeyError:
            raise UnknownWord(word) from None

    def is_category(self, word: str) -> bool:
        return word in self.categories

    def category_index(self, word: str) -> int:
        return self.categories.index(word)

    def group_of(self, word: str) -> int | None:
        return self._group.get(word)

    def cosine(self, a: str, b: str) -> float:
        return float(np.clip(self.vector(a) @ self.vector(b), -1.0, 1.0))

    def extract_nouns(self, caption) -> list[str]:
        out = []
        for tok in caption:
            i = self._index.get(tok)
            if i is not None and self.is_noun[i] and not self.is_stop[i]:
                out.append(tok)
        return out

    def bow(self, caption) -> np.ndarray:
        counts = np.zeros(self.bow_size)
        for tok in caption:
            j = self._bow_index.get(tok)
            if j is not None:
                counts[j] += 1.0
        return counts

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "words": list(self.words),
            "is_noun": list(self.is_noun),
            "is_stop": list(self.is_stop),
            "synonym_groups": [list(g) for g in self.synonym_groups],
            "categories": list(self.categories),
            "vectors": self.vectors.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "Lexicon":
        lex = cls(
            words=tuple(doc["words"]),
            vectors=np.array(doc["vectors"], dtype=float),
            is_noun=tuple(bool(v) for v in doc["is_noun"]),
            is_stop=tuple(bool(v) for v in doc["is_stop"]),
            synonym_groups=tuple(tuple(g) for g in doc["synonym_groups"]),
            categories=tuple(doc["categories"]),
            seed=int(doc.get("seed", 0)),
        )
        check_lexicon(lex)
        return lex

    @classmethod
    def from_json(cls, text: str) -> "Lexicon":
        return cls.from_dict(json.loads(text))


def check_lexicon(lex: Lexicon) -> None:
    """Exhaustive invariant check; raises LexiconError on the first violation."""
    norms = np.linalg.norm(lex.vectors, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise LexiconError("vectors are not unit norm")
    nouns = set(lex.nouns)
    if set(lex._group) != nouns:
        raise LexiconError("synonym groups must partition the nouns")
    for cat in lex.categories:
        if cat not in nouns:
            raise LexiconError(f"category {cat!r} is not a noun")
    noun_list = sorted(nouns, key=lex._index.get)
    V = np.array([lex.vector(w) for w in noun_list])
    G = np.array([lex.group_of(w) for w in noun_list])
    cos = V @ V.T
    same = G[:, None] == G[None, :]
    if np.any(cos[same] < SYNONYM_MIN_COS - 1e-12):
        raise LexiconError("synonym pair below minimum cosine")
    if np.any(cos[~same] > CROSS_MAX_COS + 1e-12):
        raise LexiconError("non-synonym nouns above maximum cosine")


def default_vocabulary():
    categories = tuple(sorted({c for prof in ROOM_PROFILES.values() for c in prof}))
    groups = [(c, *SYNONYMS.get(c, ())) for c in categories] + [(w,) for w in EXTRA_NOUNS]
    return categories, groups


def build_lexicon(seed: int = 0, dim: int = 16, max_tries: int = 2000) -> Lexicon:
    categories, groups = default_vocabulary()
    rng = np.random.default_rng([seed, 0x1E8])
    noun_vecs: list[np.ndarray] = []
    words: list[str] = []
    vectors: list[np.ndarray] = []
    for group in groups:
        for _ in range(max_tries):
            centre = _unit(rng.standard_normal(dim))
            members = [centre]
            for _syn in group[1:]:
                z = rng.standard_normal(dim) / np.sqrt(dim)
                z -= (z @ centre) * centre
                members.append(_unit(centre + 0.35 * z))
            M = np.array(members)
            if noun_vecs and np.max(M @ np.array(noun_vecs).T) > CROSS_MAX_COS:
                continue
            if np.min(M @ M.T) < SYNONYM_MIN_COS:
                continue
            break
        else:
            raise ConstructionFailed(f"could not place synonym group {group!r} after {max_tries} tries")
        noun_vecs.extend(members)
        words.extend(group)
        vectors.extend(members)
    n_nouns = len(words)
    for w in ROOM_TYPES + STOP_WORDS:
        words.append(w)
        vectors.append(_unit(rng.standard_normal(dim)))
    lex = Lexicon(
        words=tuple(words),
        vectors=np.array(vectors),
        is_noun=tuple(i < n_nouns for i in range(len(words))),
        is_stop=tuple(w in STOP_WORDS for w in words),
        synonym_groups=tuple(tuple(g) for g in groups),
        categories=categories,
        seed=seed,
    )
    check_lexicon(lex)
    return lex


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)
