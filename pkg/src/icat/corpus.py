"""Corpus loading, spam filtering, and overlapping word-window chunking.

Corpus files are JSON Lines, one document per line:
    {"doc_id": "...", "text": "...", "url": "...", "spam_percentile": 55}
url and spam_percentile are optional. Spam percentiles follow the usual
convention of 0 = spammiest, 99 = cleanest; documents scored below the
threshold are dropped, unscored documents are kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

DEFAULT_SPAM_THRESHOLD = 70
DEFAULT_MAX_WORDS = 128
DEFAULT_OVERLAP = 32


class CorpusError(ValueError):
    """Bad corpus file or bad chunking parameters."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    url: str | None = None
    spam_percentile: int | None = None


@dataclass(frozen=True)
class Snippet:
    """One word window of a document; text is the window rejoined with single spaces."""

    snippet_id: str
    doc_id: str
    word_start: int
    word_end: int  # exclusive
    text: str


def tokenize_words(text: str) -> list[str]:
    """Split on Unicode whitespace, collapsing runs; punctuation stays attached."""
    return text.split()


def load_corpus(path: str | Path, spam_threshold: int = DEFAULT_SPAM_THRESHOLD) -> list[Document]:
    """Load a JSONL corpus, dropping documents spam-scored below the threshold."""
    path = Path(path)
    docs: list[Document] = []
    seen: set[str] = set()
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise CorpusError(f"{path}:{lineno}: record is not an object")
        doc = _parse_document(record, f"{path}:{lineno}")
        if doc.doc_id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        if doc.spam_percentile is not None and doc.spam_percentile < spam_threshold:
            continue
        docs.append(doc)
    return docs


def _parse_document(record: dict, where: str) -> Document:
    doc_id = record.get("doc_id")
    text = record.get("text")
    if not isinstance(doc_id, str) or not doc_id:
        raise CorpusError(f"{where}: missing or invalid doc_id")
    if not isinstance(text, str) or not " ".join(text.split()):
        raise CorpusError(f"{where}: doc {doc_id!r} has missing or empty text")
    url = record.get("url")
    if url is not None and not isinstance(url, str):
        raise CorpusError(f"{where}: doc {doc_id!r} has non-string url")
    spam = record.get("spam_percentile")
    if spam is not None:
        if not isinstance(spam, int) or isinstance(spam, bool) or not 0 <= spam <= 99:
            raise CorpusError(
                f"{where}: doc {doc_id!r} spam_percentile must be an integer in [0, 99]"
            )
    return Document(doc_id=doc_id, text=text, url=url, spam_percentile=spam)


def chunk_document(
    doc: Document,
    max_words: int = DEFAULT_MAX_WORDS,
    overlap: int = DEFAULT_OVERLAP,
) -> list[Snippet]:
    """Slide a max_words window over the document with the given overlap.

    Windows start at multiples of the stride (max_words - overlap); the
    final window is truncated at the document end, and iteration stops as
    soon as a window reaches the last word, so no window is ever contained
    in an earlier one and every word index is covered.
    """
    if max_words <= 0:
        raise CorpusError(f"max_words must be positive, got {max_words}")
    if not 0 <= overlap < max_words:
        raise CorpusError(f"overlap must satisfy 0 <= overlap < max_words, got {overlap}")
    words = tokenize_words(doc.text)
    n = len(words)
    if n == 0:
        return []
    stride = max_words - overlap
    snippets: list[Snippet] = []
    start = 0
    while True:
        end = min(start + max_words, n)
        snippets.append(
            Snippet(
                snippet_id=f"{doc.doc_id}:{start}-{end}",
                doc_id=doc.doc_id,
                word_start=start,
                word_end=end,
                text=" ".join(words[start:end]),
            )
        )
        if end >= n:
            return snippets
        start += stride


def chunk_corpus(
    docs: list[Document],
    max_words: int = DEFAULT_MAX_WORDS,
    overlap: int = DEFAULT_OVERLAP,
) -> list[Snippet]:
    """Chunk every document, in corpus order."""
    out: list[Snippet] = []
    for doc in docs:
        out.extend(chunk_document(doc, max_words=max_words, overlap=overlap))
    return out
