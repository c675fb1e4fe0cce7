import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embscene.langmetrics import (CorpusTooSmall, ReferenceSet, bleu, cider, lcs_length, meteor_lite, rouge_l,
                                  score_corpus)
from embscene.lexicon import build_lexicon

LEX = build_lexicon(0)

toks = st.lists(st.sampled_from(list("abcdefg")), min_size=0, max_size=9)
nonempty = st.lists(st.sampled_from(list("abcdefg")), min_size=1, max_size=9)


def T(s):
    return s.split()


def test_reference_set_dedup_and_validation():
    refs = ReferenceSet.of(["a b", "a b", "c"])
    assert len(refs) == 2
    with pytest.raises(ValueError):
        ReferenceSet(())
    with pytest.raises(ValueError):
        ReferenceSet.of([[]])


def test_bleu_examples():
    assert bleu(T("a chair near a table"), ["a chair near a table"]) == 1.0
    assert bleu(T("a b"), ["a b c d"], 1) == pytest.approx(math.exp(-1), abs=1e-15)
    assert bleu(T("a a a"), ["a b"], 1) == pytest.approx(1 / 3, abs=1e-15)
    assert bleu([], ["a b"]) == 0.0
    # no bigram overlap, no smoothing
    assert bleu(T("b a"), ["a b"], 2) == 0.0


def test_bleu_closest_reference_length():
    # closest ref has length 3, so no brevity penalty for a 3-token candidate
    assert bleu(T("a b c"), ["a b c", "a b c d e f g"], 1) == 1.0


def test_rouge_examples():
    assert rouge_l(T("a b c"), ["a b c"]) == 1.0
    assert lcs_length(T("a b c"), T("a c d")) == 2
    assert rouge_l(T("a b"), ["c d"]) == 0.0
    # P = R = 2/3 gives F = 2/3 for any beta
    assert rouge_l(T("a b c"), ["a c d"]) == pytest.approx(2 / 3, abs=1e-15)


def test_lcs_examples():
    x = T("a b c d")
    assert lcs_length(x, x) == 4
    assert lcs_length(x, []) == 0
    assert lcs_length(x, T("b d")) == 2


def _brute_lcs(a, b):
    if not a or not b:
        return 0
    if a[0] == b[0]:
        return 1 + _brute_lcs(a[1:], b[1:])
    return max(_brute_lcs(a[1:], b), _brute_lcs(a, b[1:]))


@settings(max_examples=300, deadline=None)
@given(toks, toks, toks)
def test_lcs_properties(a, b, suffix):
    n = lcs_length(a, b)
    assert n == lcs_length(b, a)
    assert n == _brute_lcs(a, b)
    assert lcs_length(a + suffix, b + suffix) == n + len(suffix)


def test_cider_toy_corpus():
    corpus = [(T("a chair near a table"), ["a chair near a table"]),
              (T("a big red couch"), ["a big red couch"]),
              (T("an oven and sink"), ["an oven and sink"])]
    scores, mean = cider(corpus)
    assert scores == pytest.approx([10.0, 10.0, 10.0], abs=1e-12)
    assert mean == pytest.approx(10.0, abs=1e-12)
    # three tokens have no 4-grams, so only three of the four orders contribute
    corpus[1] = (T("a red couch"), ["a red couch"])
    assert cider(corpus)[0][1] == pytest.approx(7.5, abs=1e-12)


def test_cider_no_overlap_and_order():
    corpus = [(T("x y z"), ["a chair near a table"]),
              (T("a red couch"), ["a red couch", "a couch"]),
              (T("an oven"), ["an oven and sink"])]
    scores, _ = cider(corpus)
    assert scores[0] == 0.0
    rev, _ = cider(corpus[::-1])
    assert rev[::-1] == scores
    with pytest.raises(CorpusTooSmall):
        cider(corpus[:1])


def test_meteor_examples():
    s = T("a chair near table")
    p = r = 1.0
    f = 10 * p * r / (r + 9 * p)
    assert meteor_lite(s, [s]) == pytest.approx(f * (1 - 0.5 / 64), abs=1e-15)
    assert meteor_lite(T("x y"), ["a b"]) == 0.0
    assert meteor_lite(T("a desk"), ["a table"], LEX) == meteor_lite(T("a table"), ["a table"], LEX)
    assert meteor_lite(T("a desk"), ["a table"]) < meteor_lite(T("a desk"), ["a table"], LEX)


@settings(max_examples=10_000, deadline=None)
@given(toks, st.lists(nonempty, min_size=1, max_size=3))
def test_metric_ranges(cand, refs):
    for n in range(1, 5):
        assert 0.0 <= bleu(cand, refs, n) <= 1.0
    assert 0.0 <= rouge_l(cand, refs) <= 1.0
    assert 0.0 <= meteor_lite(cand, refs) <= 1.0


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(toks, st.lists(nonempty, min_size=1, max_size=3)), min_size=2, max_size=5))
def test_cider_range(corpus):
    scores, mean = cider(corpus)
    assert all(0.0 <= s <= 10.0 + 1e-12 for s in scores)
    assert min(scores) - 1e-12 <= mean <= max(scores) + 1e-12


@settings(max_examples=200, deadline=None)
@given(nonempty)
def test_identity_maximal(x):
    assert bleu(x, [x], 1) == 1.0
    assert rouge_l(x, [x]) == 1.0
    assert meteor_lite(x, [x]) == pytest.approx(1 - 0.5 / len(x) ** 3)


def test_score_corpus_rows_and_means():
    corpus = [(T("a chair"), ["a chair"]), (T("a desk"), ["a table"])]
    rows, means = score_corpus(corpus, LEX)
    assert len(rows) == 2
    assert means["BLEU-1"] == pytest.approx((rows[0]["BLEU-1"] + rows[1]["BLEU-1"]) / 2)
    assert set(means) == set(rows[0])
