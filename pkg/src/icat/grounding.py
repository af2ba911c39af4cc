"""Claim grounding: retrieve evidence snippets for each claim and test
entailment, keeping the full per-rank verdict trail for interpretability.

NLI direction: premise = snippet, hypothesis = claim. A claim is grounded
when at least one retrieved snippet entails it (argmax label by default,
or an entailment-probability threshold when one is configured). The first
supporting document, by retrieval rank, feeds the qrels-based alignment.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .claims import AtomicClaim
from .dense import DenseIndex, dense_search
from .gateway import EmbeddingGateway, NliGateway, WebSearchGateway

logger = logging.getLogger(__name__)

DEFAULT_K = 10


class GroundingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Evidence:
    snippet_id: str
    doc_id: str | None
    rank: int  # 1-based retrieval rank
    nli_label: str
    entail_probability: float


@dataclass(frozen=True)
class GroundingResult:
    claim_id: int
    supported: bool
    evidence: tuple[Evidence, ...]
    first_supporting_doc: str | None = None


@dataclass(frozen=True)
class RetrievedSnippet:
    snippet_id: str
    doc_id: str | None
    text: str


class CorpusRetriever:
    """Dense snippet retrieval, optionally restricted to a candidate pool of documents."""

    def __init__(
        self,
        index: DenseIndex,
        snippet_texts: dict[str, str],
        snippet_docs: dict[str, str],
        embedding: EmbeddingGateway,
        allowed_docs: set[str] | None = None,
    ):
        self.index = index
        self.snippet_texts = snippet_texts
        self.snippet_docs = snippet_docs
        self.embedding = embedding
        if allowed_docs is None:
            self._allowed_snippets = None
        else:
            self._allowed_snippets = {
                sid for sid, doc in snippet_docs.items() if doc in allowed_docs
            }

    def retrieve(self, text: str, k: int) -> list[RetrievedSnippet]:
        if self._allowed_snippets is not None and not self._allowed_snippets:
            return []
        query = self.embedding.embed([text])[0]
        ranked = dense_search(self.index, query, k=k, allowed=self._allowed_snippets)
        return [
            RetrievedSnippet(
                snippet_id=sid,
                doc_id=self.snippet_docs[sid],
                text=self.snippet_texts[sid],
            )
            for sid, _ in ranked
        ]


class WebRetriever:
    """Web-search snippets; results carry no corpus doc_id, so qrels-based
    alignment (and therefore the manual variant) cannot use them."""

    def __init__(self, websearch: WebSearchGateway):
        self.websearch = websearch

    def retrieve(self, text: str, k: int) -> list[RetrievedSnippet]:
        results = self.websearch.web_search(text, k)
        out = []
        for i, (snippet, url) in enumerate(results, start=1):
            token = hashlib.sha256(f"{url}\x00{snippet}".encode("utf-8")).hexdigest()[:12]
            out.append(RetrievedSnippet(snippet_id=f"web:{i}:{token}", doc_id=None, text=snippet))
        return out


def ground_claim(
    claim: AtomicClaim,
    retriever,
    nli: NliGateway,
    k: int = DEFAULT_K,
    entail_threshold: float | None = None,
    early_exit: bool = False,
) -> GroundingResult:
    """Verdict for one claim against the top-k retrieved snippets.

    All k NLI verdicts are kept in the evidence trail unless early_exit is
    set, in which case NLI stops after the first entailment (faster, but
    the trace is truncated).
    """
    snippets = retriever.retrieve(claim.text, k)
    evidence: list[Evidence] = []
    first_doc: str | None = None
    supported = False
    for rank, snippet in enumerate(snippets, start=1):
        verdict = nli.nli(premise=snippet.text, hypothesis=claim.text)
        if entail_threshold is None:
            entailed = verdict.label == "entailment"
        else:
            entailed = verdict.entail_probability >= entail_threshold
        evidence.append(
            Evidence(
                snippet_id=snippet.snippet_id,
                doc_id=snippet.doc_id,
                rank=rank,
                nli_label=verdict.label,
                entail_probability=verdict.entail_probability,
            )
        )
        if entailed and not supported:
            supported = True
            first_doc = snippet.doc_id
            if early_exit:
                break
    return GroundingResult(
        claim_id=claim.claim_id,
        supported=supported,
        evidence=tuple(evidence),
        first_supporting_doc=first_doc,
    )


def ground_all(
    claims: list[AtomicClaim],
    retriever,
    nli: NliGateway,
    k: int = DEFAULT_K,
    entail_threshold: float | None = None,
    early_exit: bool = False,
    max_workers: int = 1,
) -> tuple[list[AtomicClaim], list[GroundingResult]]:
    """Ground every claim; returns (grounded claims in input order, one result per claim)."""
    if not claims:
        return [], []

    def one(claim: AtomicClaim) -> GroundingResult:
        return ground_claim(
            claim, retriever, nli, k=k, entail_threshold=entail_threshold, early_exit=early_exit
        )

    if max_workers > 1 and len(claims) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(one, claims))
    else:
        results = [one(claim) for claim in claims]
    grounded = [claim for claim, result in zip(claims, results) if result.supported]
    return grounded, results
