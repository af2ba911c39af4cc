"""Atomic claim extraction and the synthetic training-data generator.

A long response is decomposed by the chat backend into self-contained,
decontextualized single-fact statements. Parsing is deliberately liberal
about the list format (JSON array or marked lines) and strict about
everything else: one re-prompt with a format reminder, then a hard error
carrying the raw completion. Silent claim loss is worse than a loud stop.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass

from .gateway import ChatGateway
from .prompts import DEFAULT_PROMPTS, PromptLibrary

logger = logging.getLogger(__name__)

# Requires whitespace after the marker so "3.5 million ..." is not treated
# as item "5 million ..." of an enumeration.
_MARKER_RE = re.compile(r"^\s*(?:[-*•]+|\d{1,3}[.):])\s+")
_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```$", re.DOTALL)


class ClaimError(ValueError):
    pass


class ClaimParseError(ClaimError):
    """The completion was not a recognizable claim list."""

    def __init__(self, message: str, completion: str = ""):
        super().__init__(message)
        self.completion = completion


class SynthesisError(ClaimError):
    """A stage of the synthetic-data pipeline failed; message carries the stage."""


@dataclass(frozen=True)
class AtomicClaim:
    """One self-contained factual statement; claim_id is its 1-based ordinal
    within the response it came from."""

    claim_id: int
    text: str
    source_response_id: str = ""

    def __post_init__(self) -> None:
        if self.claim_id < 1:
            raise ClaimError(f"claim_id must be >= 1, got {self.claim_id}")
        if not self.text.strip():
            raise ClaimError("claim text must be non-empty")
        if _MARKER_RE.match(self.text):
            raise ClaimError(f"claim text carries an enumeration marker: {self.text!r}")


@dataclass(frozen=True)
class SyntheticExample:
    topic: str
    entity: str
    paragraph: str
    claims: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.paragraph.strip():
            raise ClaimError("synthetic example paragraph must be non-empty")
        if not self.claims:
            raise ClaimError("synthetic example must carry at least one claim")


def _strip_fence(text: str) -> str:
    match = _FENCE_RE.match(text.strip())
    return match.group(1).strip() if match else text.strip()


def parse_claim_list(completion: str) -> list[str]:
    """Parse a completion into an ordered list of claim strings.

    Accepted shapes, tried in order:
      1. a JSON array of strings (optionally fenced);
      2. lines carrying enumeration markers ("1.", "-", "*", ...): the
         marked lines are the items and unmarked lines (prose chatter) are
         dropped;
      3. two or more bare lines: every line is an item.
    A single bare non-JSON line is rejected: it is indistinguishable from
    conversational filler.
    """
    text = _strip_fence(completion)
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = None
    if isinstance(data, list):
        if not all(isinstance(item, str) for item in data):
            raise ClaimParseError("JSON array contains non-string items", completion)
        return [item.strip() for item in data if item.strip()]
    lines = [line for line in text.splitlines() if line.strip()]
    marked = [line for line in lines if _MARKER_RE.match(line)]
    if marked:
        items = [_MARKER_RE.sub("", line).strip() for line in marked]
    elif len(lines) >= 2:
        items = [line.strip() for line in lines]
    else:
        raise ClaimParseError(
            "completion is neither a JSON array nor a recognizable list", completion
        )
    return [item for item in items if item]


def _chat_list(
    chat: ChatGateway, prompt: str, prompts: PromptLibrary, what: str
) -> list[str]:
    """One completion -> parsed list, with a single stricter-format retry."""
    completion = chat.chat(prompt)
    try:
        return parse_claim_list(completion)
    except ClaimParseError:
        logger.warning("unparseable %s list, re-prompting once", what)
    retry_prompt = prompt + "\n\n" + prompts.raw("format_reminder")
    completion = chat.chat(retry_prompt)
    try:
        return parse_claim_list(completion)
    except ClaimParseError as exc:
        raise ClaimParseError(
            f"unparseable {what} list after re-prompt: {exc}", completion
        ) from exc


def extract_claims(
    response_text: str,
    chat: ChatGateway,
    prompts: PromptLibrary = DEFAULT_PROMPTS,
    response_id: str = "",
) -> list[AtomicClaim]:
    """Decompose a response into atomic claims with ordinal ids 1..n.

    Empty or whitespace-only input short-circuits to an empty list without
    touching the backend.
    """
    if not response_text.strip():
        return []
    prompt = prompts.render("claim_extraction", response=response_text)
    items = _chat_list(chat, prompt, prompts, "claim")
    return [
        AtomicClaim(claim_id=i, text=text, source_response_id=response_id)
        for i, text in enumerate(items, start=1)
    ]


def generate_synthetic_data(
    chat: ChatGateway,
    n_topics: int = 200,
    entities_per_topic: int = 5,
    prompts: PromptLibrary = DEFAULT_PROMPTS,
) -> list[SyntheticExample]:
    """Three-stage sampler: topics -> entities per topic -> paragraph + claims
    per entity. Yields exactly n_topics * entities_per_topic examples."""
    if n_topics < 1 or entities_per_topic < 1:
        raise SynthesisError("n_topics and entities_per_topic must be >= 1")
    try:
        topics = _chat_list(
            chat, prompts.render("synth_topics", n=str(n_topics)), prompts, "topic"
        )
    except ClaimError as exc:
        raise SynthesisError(f"topic generation failed: {exc}") from exc
    if len(topics) < n_topics:
        raise SynthesisError(
            f"topic generation returned {len(topics)} topics, need {n_topics}"
        )
    topics = topics[:n_topics]

    examples: list[SyntheticExample] = []
    for topic in topics:
        try:
            entities = _chat_list(
                chat,
                prompts.render("synth_entities", topic=topic, n=str(entities_per_topic)),
                prompts,
                "entity",
            )
        except ClaimError as exc:
            raise SynthesisError(f"entity generation failed for topic {topic!r}: {exc}") from exc
        if len(entities) < entities_per_topic:
            raise SynthesisError(
                f"entity generation for topic {topic!r} returned {len(entities)}, "
                f"need {entities_per_topic}"
            )
        for entity in entities[:entities_per_topic]:
            prompt = prompts.render("synth_paragraph", topic=topic, entity=entity)
            completion = chat.chat(prompt)
            try:
                record = json.loads(_strip_fence(completion))
                paragraph = record["paragraph"]
                claims = record["claims"]
                if not isinstance(paragraph, str) or not isinstance(claims, list):
                    raise KeyError("bad field types")
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SynthesisError(
                    f"paragraph generation failed for entity {entity!r} "
                    f"(topic {topic!r}): {exc}"
                ) from exc
            examples.append(
                SyntheticExample(
                    topic=topic,
                    entity=entity,
                    paragraph=paragraph,
                    claims=tuple(str(c) for c in claims),
                )
            )
    return examples


def write_synthetic_jsonl(examples: list[SyntheticExample], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for ex in examples:
            handle.write(
                json.dumps(
                    {
                        "topic": ex.topic,
                        "entity": ex.entity,
                        "paragraph": ex.paragraph,
                        "claims": list(ex.claims),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
