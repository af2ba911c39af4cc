"""BM25 inverted index over whole documents, used for per-topic candidate pooling.

The scoring formula is pinned so tests can check it against an independent
brute-force scorer:

    score(q, d) = sum over t in q of
        IDF(t) * tf(t, d) * (k1 + 1) / (tf(t, d) + k1 * (1 - b + b * len(d) / avglen))
    IDF(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))

The IDF is the non-negative (Lucene-style) variant. Query terms are the
lowercased whitespace tokens of the query string; a repeated query term
contributes once per occurrence. Ties are broken by ascending doc_id.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .corpus import Document
from .ranking import RankedList

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75
DEFAULT_POOL_SIZE = 1000


class Bm25Error(ValueError):
    pass


def bm25_tokenize(text: str) -> list[str]:
    return text.lower().split()


@dataclass
class Bm25Index:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    doc_count: int
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    idf: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.idf:
            self.idf = {
                term: self._idf(len(plist)) for term, plist in self.postings.items()
            }

    def _idf(self, df: int) -> float:
        return math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))


def bm25_build(corpus: list[Document], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Bm25Index:
    """Index the lowercased whitespace tokens of every document."""
    if not corpus:
        raise Bm25Error("cannot build a BM25 index over an empty corpus")
    postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    for doc in corpus:
        tokens = bm25_tokenize(doc.text)
        doc_lengths[doc.doc_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, {})[doc.doc_id] = tf
    # Sort postings and doc ids so the index is identical for any insertion order.
    sorted_postings = {
        term: sorted(doc_tfs.items()) for term, doc_tfs in sorted(postings.items())
    }
    doc_lengths = dict(sorted(doc_lengths.items()))
    n = len(doc_lengths)
    return Bm25Index(
        postings=sorted_postings,
        doc_lengths=doc_lengths,
        avg_doc_length=sum(doc_lengths.values()) / n,
        doc_count=n,
        k1=k1,
        b=b,
    )


def bm25_search(index: Bm25Index, query: str, k: int) -> RankedList:
    """Top-k documents for the query; documents sharing no query term are excluded."""
    if k < 1:
        raise Bm25Error(f"k must be >= 1, got {k}")
    scores: dict[str, float] = {}
    for term in bm25_tokenize(query):
        plist = index.postings.get(term)
        if plist is None:
            continue
        idf = index.idf[term]
        for doc_id, tf in plist:
            norm = index.k1 * (
                1.0 - index.b + index.b * index.doc_lengths[doc_id] / index.avg_doc_length
            )
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (index.k1 + 1.0) / (tf + norm)
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:k]
    return RankedList(entries=tuple(ranked))


def candidate_pool(
    index: Bm25Index, topic_title: str, pool_size: int = DEFAULT_POOL_SIZE
) -> set[str]:
    """The per-topic sub-corpus: dense grounding for this topic is restricted to it."""
    if pool_size < 1:
        raise Bm25Error(f"pool_size must be >= 1, got {pool_size}")
    return set(bm25_search(index, topic_title, pool_size).ids())
