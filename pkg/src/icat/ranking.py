"""Shared ranked-result container used by both retrieval indexes."""

from __future__ import annotations

from dataclasses import dataclass


class RankingError(ValueError):
    pass


@dataclass(frozen=True)
class RankedList:
    """Items ordered by non-increasing score; ids are unique."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        ids = [item_id for item_id, _ in self.entries]
        if len(ids) != len(set(ids)):
            raise RankingError("duplicate item ids in ranked list")
        scores = [score for _, score in self.entries]
        for prev, cur in zip(scores, scores[1:]):
            if cur > prev:
                raise RankingError("scores must be non-increasing")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def ids(self) -> list[str]:
        return [item_id for item_id, _ in self.entries]
