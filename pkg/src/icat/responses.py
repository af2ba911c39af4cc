"""Responses under evaluation: one long output per (query, system) pair.

File format: JSON Lines {"query_id": ..., "system_id": ..., "text": ...}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class ResponsesError(ValueError):
    pass


@dataclass(frozen=True)
class ResponseRecord:
    query_id: str
    system_id: str
    text: str


def load_responses(path: str | Path) -> list[ResponseRecord]:
    """Load response records, rejecting duplicate (query_id, system_id) pairs."""
    path = Path(path)
    records: list[ResponseRecord] = []
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ResponsesError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        query_id = record.get("query_id")
        system_id = record.get("system_id")
        text = record.get("text")
        if not isinstance(query_id, str) or not query_id:
            raise ResponsesError(f"{path}:{lineno}: missing query_id")
        if not isinstance(system_id, str) or not system_id:
            raise ResponsesError(f"{path}:{lineno}: missing system_id")
        if not isinstance(text, str):
            raise ResponsesError(f"{path}:{lineno}: missing text")
        key = (query_id, system_id)
        if key in seen:
            raise ResponsesError(
                f"{path}:{lineno}: duplicate response for query {query_id!r} / "
                f"system {system_id!r}"
            )
        seen.add(key)
        records.append(ResponseRecord(query_id=query_id, system_id=system_id, text=text))
    return records
