"""Caption metrics over pre-tokenised text: BLEU-1..4, ROUGE-L, plain CIDEr and
a simplified METEOR ("Meteor-lite": exact + synonym-group alignment only)."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import _kernels

ROUGE_BETA = 1.2
CIDER_MAX_N = 4
CIDER_SCALE = 10.0


class CorpusTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceSet:
    references: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.references:
            raise ValueError("a reference set needs at least one reference")
        if any(len(r) == 0 for r in self.references):
            raise ValueError("references must be non-empty")

    @classmethod
    def of(cls, refs) -> "ReferenceSet":
        seen, out = set(), []
        for r in refs:
            r = tuple(r.split()) if isinstance(r, str) else tuple(r)
            if r not in seen:
                seen.add(r)
                out.append(r)
        return cls(tuple(out))

    def __iter__(self):
        return iter(self.references)

    def __len__(self):
        return len(self.references)


def _refs(refs) -> ReferenceSet:
    return refs if isinstance(refs, ReferenceSet) else ReferenceSet.of(refs)


def ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_length(c: int, refs: ReferenceSet) -> int:
    return min((abs(len(r) - c), len(r)) for r in refs)[1]


def bleu(candidate, refs, n: int = 4) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    refs = _refs(refs)
    cand = list(candidate)
    if not cand:
        return 0.0
    log_sum = 0.0
    for k in range(1, n + 1):
        counts = ngrams(cand, k)
        total = sum(counts.values())
        if total == 0:
            return 0.0
        max_ref: Counter = Counter()
        for r in refs:
            for g, c in ngrams(r, k).items():
                max_ref[g] = max(max_ref[g], c)
        clipped = sum(min(c, max_ref[g]) for g, c in counts.items())
        if clipped == 0:
            return 0.0
        log_sum += math.log(clipped / total)
    c = len(cand)
    r = _closest_ref_length(c, refs)
    bp = math.exp(min(0.0, 1.0 - r / c))
    return bp * math.exp(log_sum / n)


def lcs_length(a, b) -> int:
    if not a or not b:
        return 0
    vocab: dict = {}
    ia = np.array([vocab.setdefault(t, len(vocab)) for t in a], dtype=np.int64)
    ib = np.array([vocab.setdefault(t, len(vocab)) for t in b], dtype=np.int64)
    return int(_kernels.lcs(ia, ib))


def rouge_l(candidate, refs, beta: float = ROUGE_BETA) -> float:
    refs = _refs(refs)
    cand = list(candidate)
    best = 0.0
    for r in refs:
        lcs = lcs_length(cand, list(r))
        if lcs == 0:
            continue
        p = lcs / len(cand)
        rec = lcs / len(r)
        f = (1 + beta**2) * p * rec / (rec + beta**2 * p)
        best = max(best, f)
    return best


def _tfidf(counts: Counter, idf: dict) -> tuple[dict, float]:
    vec = {g: c * idf.get(g, 0.0) for g, c in counts.items()}
    return vec, math.sqrt(sum(v * v for v in vec.values()))


def cider(corpus) -> tuple[list[float], float]:
    """``corpus`` is a sequence of (candidate tokens, references) pairs.
    Returns per-item scores in input order and their mean."""
    items = [(list(c), _refs(r)) for c, r in corpus]
    if len(items) < 2:
        raise CorpusTooSmall("CIDEr needs at least two items to estimate document frequencies")
    n_docs = len(items)
    idf_by_n = []
    for n in range(1, CIDER_MAX_N + 1):
        df: Counter = Counter()
        for _, refs in items:
            df.update({g for r in refs for g in ngrams(r, n)})
        idf_by_n.append({g: math.log(n_docs / d) for g, d in df.items()})
    scores = []
    for cand, refs in items:
        per_n = []
        for n in range(1, CIDER_MAX_N + 1):
            idf = idf_by_n[n - 1]
            vc, nc = _tfidf(ngrams(cand, n), idf)
            sims = []
            for r in refs:
                vr, nr = _tfidf(ngrams(r, n), idf)
                if nc == 0.0 or nr == 0.0:
                    sims.append(0.0)
                    continue
                dot = sum(v * vr.get(g, 0.0) for g, v in vc.items())
                sims.append(min(1.0, max(0.0, dot / (nc * nr))))
            per_n.append(sum(sims) / len(sims))
        scores.append(CIDER_SCALE * sum(per_n) / len(per_n))
    return scores, sum(scores) / len(scores)


def _align(cand, ref, lex):
    """Greedy two-stage unigram alignment: exact matches, then synonyms.
    Returns the sorted list of (cand position, ref position) pairs."""
    used_c, used_r = set(), set()
    pairs = []
    stages = [lambda a, b: a == b]
    if lex is not None:
        def same_group(a, b):
            g = lex.group_of(a)
            return g is not None and g == lex.group_of(b)
        stages.append(same_group)
    for match in stages:
        for i, tok in enumerate(cand):
            if i in used_c:
                continue
            for j, rtok in enumerate(ref):
                if j not in used_r and match(tok, rtok):
                    used_c.add(i)
                    used_r.add(j)
                    pairs.append((i, j))
                    break
    return sorted(pairs)


def _chunks(pairs) -> int:
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_lite(candidate, refs, lex=None) -> float:
    refs = _refs(refs)
    cand = list(candidate)
    best = 0.0
    for r in refs:
        pairs = _align(cand, list(r), lex)
        m = len(pairs)
        if m == 0:
            continue
        p = m / len(cand)
        rec = m / len(r)
        f = 10 * p * rec / (rec + 9 * p)
        penalty = 0.5 * (_chunks(pairs) / m) ** 3
        best = max(best, f * (1.0 - penalty))
    return best


METRIC_NAMES = ("BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "Meteor-lite", "ROUGE_L", "CIDEr")


def score_corpus(corpus, lex=None) -> tuple[list[dict], dict]:
    """All metrics for every (candidate, references) item, plus their means."""
    items = [(list(c), _refs(r)) for c, r in corpus]
    cider_scores = cider(items)[0] if len(items) >= 2 else [0.0] * len(items)
    rows = []
    for (cand, refs), ci in zip(items, cider_scores):
        row = {f"BLEU-{n}": bleu(cand, refs, n) for n in range(1, 5)}
        row["Meteor-lite"] = meteor_lite(cand, refs, lex)
        row["ROUGE_L"] = rouge_l(cand, refs)
        row["CIDEr"] = ci
        rows.append(row)
    means = {k: (sum(r[k] for r in rows) / len(rows) if rows else 0.0) for k in METRIC_NAMES}
    return rows, means
