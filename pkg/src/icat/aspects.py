"""Query aspects and claim-aspect alignment.

Aspects come from a gold topics file (JSON Lines with subtopics) or from
the chat backend. Alignment is either qrels-based (the aspects judged
relevant for a claim's first supporting document become the claim's
aspects) or LLM-based (one structured prompt over all grounded claims).

File formats:
  topics  JSONL: {"query_id", "title", "description", "subtopics":
          [{"id", "text"}, ...]}
  qrels   whitespace-separated lines: query_id aspect_id doc_id grade
          (grades >= 1 are relevant; 0 and negative junk grades are not)
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .claims import AtomicClaim, ClaimParseError, _chat_list, _strip_fence
from .gateway import ChatGateway
from .grounding import GroundingResult
from .prompts import DEFAULT_PROMPTS, PromptLibrary

logger = logging.getLogger(__name__)

MAX_GENERATED_ASPECTS = 10

PROVENANCE_GOLD = "gold"
PROVENANCE_GENERATED = "generated"

METHOD_MANUAL = "manual"
METHOD_LLM = "llm"


class AspectError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class Aspect:
    aspect_id: str
    description: str


@dataclass(frozen=True)
class AspectSet:
    query_id: str
    aspects: tuple[Aspect, ...]
    provenance: str

    def __post_init__(self) -> None:
        if not self.aspects:
            raise AspectError(f"query {self.query_id!r} has no aspects")
        ids = [a.aspect_id for a in self.aspects]
        if len(ids) != len(set(ids)):
            raise AspectError(f"duplicate aspect ids for query {self.query_id!r}")
        if self.provenance not in (PROVENANCE_GOLD, PROVENANCE_GENERATED):
            raise AspectError(f"unknown provenance {self.provenance!r}")
        if self.provenance == PROVENANCE_GENERATED and len(self.aspects) > MAX_GENERATED_ASPECTS:
            raise AspectError("generated aspect sets are capped at 10 aspects")

    def ids(self) -> set[str]:
        return {a.aspect_id for a in self.aspects}


@dataclass(frozen=True)
class Topic:
    query_id: str
    title: str
    description: str
    subtopics: tuple[Aspect, ...] = ()


@dataclass
class Qrels:
    """Binary (query, aspect, doc) judgments keyed for exact lookup."""

    entries: dict[tuple[str, str, str], bool] = field(default_factory=dict)

    def is_relevant(self, query_id: str, aspect_id: str, doc_id: str) -> bool:
        return self.entries.get((query_id, aspect_id, doc_id), False)

    def relevant_aspects(self, query_id: str, doc_id: str) -> set[str]:
        return {
            aspect_id
            for (qid, aspect_id, did), rel in self.entries.items()
            if rel and qid == query_id and did == doc_id
        }

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class AlignmentMap:
    """claim_id -> aspect ids; only grounded claims appear as keys."""

    query_id: str
    mapping: dict[int, frozenset[str]]
    method: str

    def __post_init__(self) -> None:
        if self.method not in (METHOD_MANUAL, METHOD_LLM):
            raise AlignmentError(f"unknown alignment method {self.method!r}")


def load_topics(path: str | Path) -> dict[str, Topic]:
    """All topics from a JSONL topics file, in file order."""
    path = Path(path)
    topics: dict[str, Topic] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AspectError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        query_id = str(record.get("query_id", ""))
        if not query_id:
            raise AspectError(f"{path}:{lineno}: missing query_id")
        if query_id in topics:
            raise AspectError(f"{path}:{lineno}: duplicate query_id {query_id!r}")
        subtopics = []
        seen_ids: set[str] = set()
        for sub in record.get("subtopics", []) or []:
            aspect_id = str(sub.get("id", ""))
            text = str(sub.get("text", ""))
            if not aspect_id or not text:
                raise AspectError(f"{path}:{lineno}: subtopic needs both id and text")
            if aspect_id in seen_ids:
                raise AspectError(
                    f"{path}:{lineno}: duplicate aspect id {aspect_id!r} for query {query_id!r}"
                )
            seen_ids.add(aspect_id)
            subtopics.append(Aspect(aspect_id=aspect_id, description=text))
        topics[query_id] = Topic(
            query_id=query_id,
            title=str(record.get("title", "")),
            description=str(record.get("description", "")),
            subtopics=tuple(subtopics),
        )
    return topics


def gold_aspects(topic: Topic) -> AspectSet:
    if not topic.subtopics:
        raise AspectError(f"query {topic.query_id!r} has no gold subtopics")
    return AspectSet(
        query_id=topic.query_id, aspects=topic.subtopics, provenance=PROVENANCE_GOLD
    )


def load_gold_aspects(topics_file: str | Path, query_id: str) -> AspectSet:
    topics = load_topics(topics_file)
    if query_id not in topics:
        raise AspectError(f"query {query_id!r} not present in {topics_file}")
    return gold_aspects(topics[query_id])


def generate_aspects(
    query_text: str,
    chat: ChatGateway,
    prompts: PromptLibrary = DEFAULT_PROMPTS,
    query_id: str = "",
    max_aspects: int = MAX_GENERATED_ASPECTS,
) -> AspectSet:
    """LLM-generated aspect set with ordinal ids, capped at max_aspects."""
    if not query_text.strip():
        raise AspectError("cannot generate aspects for an empty query")
    prompt = prompts.render("aspect_generation", query=query_text, max_aspects=str(max_aspects))
    items = _chat_list(chat, prompt, prompts, "aspect")
    if not items:
        raise AspectError("no aspects generated")
    items = items[:max_aspects]
    return AspectSet(
        query_id=query_id,
        aspects=tuple(
            Aspect(aspect_id=str(i), description=text) for i, text in enumerate(items, start=1)
        ),
        provenance=PROVENANCE_GENERATED,
    )


def load_qrels(path: str | Path) -> Qrels:
    """TREC diversity-layout qrels with graded-to-binary conversion (grade >= 1)."""
    path = Path(path)
    entries: dict[tuple[str, str, str], bool] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise AspectError(
                f"{path}:{lineno}: expected 'query_id aspect_id doc_id grade', got {line!r}"
            )
        query_id, aspect_id, doc_id, grade_text = parts
        try:
            grade = int(grade_text)
        except ValueError as exc:
            raise AspectError(f"{path}:{lineno}: non-integer grade {grade_text!r}") from exc
        relevant = grade >= 1
        key = (query_id, aspect_id, doc_id)
        if key in entries and entries[key] != relevant:
            raise AspectError(
                f"{path}:{lineno}: conflicting judgments for {key}"
            )
        entries[key] = relevant
    return Qrels(entries=entries)


def align_manual(
    query_id: str,
    grounded: list[GroundingResult],
    qrels: Qrels,
    aspect_ids: set[str] | None = None,
    all_supporting: bool = False,
    entail_threshold: float | None = None,
) -> AlignmentMap:
    """Qrels-based alignment: a grounded claim covers the aspects its first
    supporting document was judged relevant for.

    An unjudged first-supporting document yields the empty set (pooled
    judgments are incomplete by nature); unsupported claims are omitted.
    Requires corpus-mode grounding: web snippets carry no corpus doc_id.
    With all_supporting, aspects come from every supporting document in the
    evidence trail instead of only the first (off by default).
    """
    mapping: dict[int, frozenset[str]] = {}
    for result in grounded:
        if not result.supported:
            continue
        if result.first_supporting_doc is None:
            raise AlignmentError("ICAT-M requires corpus retrieval")
        if all_supporting:
            docs = []
            for entry in result.evidence:
                if entail_threshold is None:
                    entailed = entry.nli_label == "entailment"
                else:
                    entailed = entry.entail_probability >= entail_threshold
                if entailed:
                    if entry.doc_id is None:
                        raise AlignmentError("ICAT-M requires corpus retrieval")
                    docs.append(entry.doc_id)
        else:
            docs = [result.first_supporting_doc]
        aspects: set[str] = set()
        for doc_id in docs:
            aspects |= qrels.relevant_aspects(query_id, doc_id)
        if aspect_ids is not None:
            foreign = aspects - aspect_ids
            if foreign:
                logger.warning(
                    "qrels aspects %s for docs %s are not in query %s's aspect set; dropped",
                    sorted(foreign), docs, query_id,
                )
            aspects &= aspect_ids
        mapping[result.claim_id] = frozenset(aspects)
    return AlignmentMap(query_id=query_id, mapping=mapping, method=METHOD_MANUAL)


def _parse_alignment_records(completion: str) -> list[dict]:
    """JSONL records out of a completion, tolerating a prose preamble.

    Returns [] when nothing parses (wholesale failure -> caller re-prompts).
    """
    text = _strip_fence(completion)
    try:
        data = json.loads(text)
        if isinstance(data, list):
            return [record for record in data if isinstance(record, dict)]
    except json.JSONDecodeError:
        pass
    start = text.find("{")
    if start < 0:
        return []
    records: list[dict] = []
    for line in text[start:].splitlines():
        line = line.strip().rstrip(",")
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            logger.warning("skipping unparseable alignment line: %r", line[:120])
            continue
        if isinstance(record, dict):
            records.append(record)
    return records


def align_llm(
    query_text: str,
    aspect_set: AspectSet,
    grounded_claims: list[AtomicClaim],
    chat: ChatGateway,
    prompts: PromptLibrary = DEFAULT_PROMPTS,
) -> AlignmentMap:
    """LLM alignment: one prompt enumerating all aspects and grounded claims,
    expecting JSONL lines {"aspect_id": ..., "claim_ids": [...]}.

    Lines naming unknown aspect or claim ids are dropped with a warning;
    a wholesale parse failure gets one re-prompt and then errors.
    """
    if not grounded_claims:
        return AlignmentMap(query_id=aspect_set.query_id, mapping={}, method=METHOD_LLM)
    aspect_lines = "\n".join(f"{a.aspect_id}. {a.description}" for a in aspect_set.aspects)
    claim_lines = "\n".join(f"{c.claim_id}. {c.text}" for c in grounded_claims)
    prompt = prompts.render(
        "alignment", query=query_text, aspects=aspect_lines, claims=claim_lines
    )
    completion = chat.chat(prompt)
    records = _parse_alignment_records(completion)
    if not records:
        logger.warning("unparseable alignment output, re-prompting once")
        completion = chat.chat(prompt + "\n\n" + prompts.raw("format_reminder"))
        records = _parse_alignment_records(completion)
        if not records:
            raise ClaimParseError("unparseable alignment output after re-prompt", completion)

    known_aspects = aspect_set.ids()
    known_claims = {c.claim_id for c in grounded_claims}
    mapping: dict[int, set[str]] = {}
    for record in records:
        aspect_id = str(record.get("aspect_id", ""))
        if aspect_id not in known_aspects:
            logger.warning("alignment names unknown aspect id %r; line dropped", aspect_id)
            continue
        claim_ids = record.get("claim_ids", [])
        if not isinstance(claim_ids, list):
            logger.warning("alignment claim_ids is not a list for aspect %r", aspect_id)
            continue
        for raw in claim_ids:
            try:
                claim_id = int(raw)
            except (TypeError, ValueError):
                logger.warning("alignment claim id %r is not an integer; dropped", raw)
                continue
            if claim_id not in known_claims:
                logger.warning("alignment names unknown claim id %r; dropped", claim_id)
                continue
            mapping.setdefault(claim_id, set()).add(aspect_id)
    return AlignmentMap(
        query_id=aspect_set.query_id,
        mapping={cid: frozenset(aspects) for cid, aspects in mapping.items()},
        method=METHOD_LLM,
    )


def covered_aspects(alignment: AlignmentMap) -> set[str]:
    """Union of every mapped claim's aspect set."""
    covered: set[str] = set()
    for aspects in alignment.mapping.values():
        covered |= aspects
    return covered
