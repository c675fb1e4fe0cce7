import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embscene.gridscene import ROOM_PROFILES
from embscene.lexicon import (CROSS_MAX_COS, STOP_WORDS, SYNONYM_MIN_COS, ConstructionFailed, Lexicon,
                              UnknownWord, build_lexicon, check_lexicon)
from embscene.perception import FALLBACK_CAPTION


def tiny_lexicon():
    words = ("couch", "lamp", "a")
    return Lexicon(words, np.eye(3), (True, True, False), (False, False, True), (("couch",), ("lamp",)),
                   ("couch", "lamp"))


def test_deterministic(lex):
    again = build_lexicon(0)
    assert again.words == lex.words
    assert np.array_equal(again.vectors, lex.vectors)
    assert not np.array_equal(build_lexicon(1).vectors, lex.vectors)


def test_unit_norm(lex):
    assert np.allclose(np.linalg.norm(lex.vectors, axis=1), 1.0, atol=1e-9, rtol=0)


def test_synonym_bounds_exhaustive(lex):
    check_lexicon(lex)
    for a, b in itertools.combinations(lex.nouns, 2):
        c = lex.cosine(a, b)
        if lex.group_of(a) == lex.group_of(b):
            assert c >= SYNONYM_MIN_COS
        else:
            assert c <= CROSS_MAX_COS


def test_desk_table(lex):
    assert lex.group_of("desk") == lex.group_of("table")
    assert lex.cosine("desk", "table") >= 0.8


def test_vocabulary_coverage(lex):
    for profile in ROOM_PROFILES.values():
        for cat in profile:
            assert lex.is_category(cat)
    assert all(w in lex for w in FALLBACK_CAPTION)
    assert lex.n_categories == len({c for p in ROOM_PROFILES.values() for c in p})


def test_cosine_basics(lex):
    rng = np.random.default_rng(0)
    words = list(lex.words)
    assert lex.cosine("chair", "chair") == pytest.approx(1.0, abs=1e-12)
    for _ in range(100):
        a, b = rng.choice(words, 2)
        assert lex.cosine(a, b) == lex.cosine(b, a)
    assert tiny_lexicon().cosine("couch", "lamp") == 0.0
    with pytest.raises(UnknownWord):
        lex.cosine("chair", "spaceship")


def test_extract_nouns(lex):
    assert lex.extract_nouns("a couch and a table".split()) == ["couch", "table"]
    assert lex.extract_nouns(list(FALLBACK_CAPTION)) == ["wall", "wall"]
    assert lex.extract_nouns([]) == []
    assert lex.extract_nouns("a zebra on the couch".split()) == ["couch"]


def test_bow(lex):
    assert not lex.bow([]).any()
    v = lex.bow("a couch and a couch".split())
    assert v.sum() == 2
    assert lex.bow_size == sum(1 for w in lex.words if w not in STOP_WORDS)
    assert lex.bow(["the", "a", "with"]).sum() == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["a", "couch", "table", "with", "kitchen", "zebra", "desk"]), max_size=12),
       st.randoms(use_true_random=False))
def test_bow_permutation_invariant(tokens, rnd):
    lex = build_lexicon(0)
    shuffled = list(tokens)
    rnd.shuffle(shuffled)
    assert np.array_equal(lex.bow(tokens), lex.bow(shuffled))
    nouns = lex.extract_nouns(tokens)
    for w in set(nouns):
        assert nouns.count(w) <= tokens.count(w)


def test_json_roundtrip(lex):
    again = Lexicon.from_json(lex.to_json())
    assert again.words == lex.words
    assert np.array_equal(again.vectors, lex.vectors)
    assert again.synonym_groups == lex.synonym_groups


def test_construction_failure():
    with pytest.raises(ConstructionFailed):
        build_lexicon(0, dim=2, max_tries=5)
