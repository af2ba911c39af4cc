"""Dense snippet index: exact inner-product search plus an approximate
navigable-small-world graph.

Vectors are unit-normalized, so inner product equals cosine. Exact mode is
an exhaustive scan and serves as the correctness reference; approximate
mode is a single-layer NSW graph: each inserted node is connected to a
diversity-pruned neighbor set found by a greedy beam search from a fixed
entry point, and queries run the same beam search with the search beam
width. Ties are broken by ascending snippet_id everywhere.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .corpus import Snippet
from .ranking import RankedList

MODE_EXACT = "exact"
MODE_APPROXIMATE = "approximate"

DEFAULT_DEGREE = 16
DEFAULT_CONSTRUCTION_BEAM = 100
DEFAULT_SEARCH_BEAM = 64
DEFAULT_K = 10


class DenseIndexError(ValueError):
    pass


@dataclass
class DenseIndex:
    snippet_ids: list[str]
    matrix: np.ndarray  # (n, d) float32, unit rows
    mode: str = MODE_EXACT
    degree: int = DEFAULT_DEGREE
    construction_beam: int = DEFAULT_CONSTRUCTION_BEAM
    search_beam: int = DEFAULT_SEARCH_BEAM
    neighbors: list[list[int]] = field(default_factory=list)
    _row_of: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.snippet_ids):
            raise DenseIndexError("vector matrix does not match snippet id list")
        if len(set(self.snippet_ids)) != len(self.snippet_ids):
            raise DenseIndexError("duplicate snippet ids")
        if self.mode not in (MODE_EXACT, MODE_APPROXIMATE):
            raise DenseIndexError(f"unknown mode {self.mode!r}")
        if not self._row_of:
            self._row_of = {sid: row for row, sid in enumerate(self.snippet_ids)}

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.snippet_ids)


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DenseIndexError("zero vector cannot be normalized")
    return (matrix / norms).astype(np.float32)


def dense_build(
    snippets: list[Snippet],
    embedder,
    mode: str = MODE_EXACT,
    degree: int = DEFAULT_DEGREE,
    construction_beam: int = DEFAULT_CONSTRUCTION_BEAM,
    search_beam: int = DEFAULT_SEARCH_BEAM,
) -> DenseIndex:
    """Embed all snippets through the embedding gateway and index them.

    Normalization happens engine-side regardless of what the backend
    returns, so inner-product and cosine ranking coincide unconditionally.
    """
    if not snippets:
        raise DenseIndexError("no snippets to index")
    for sn in snippets:
        if not sn.text.strip():
            raise DenseIndexError(f"snippet {sn.snippet_id!r} has empty text")
    vectors = embedder.embed([sn.text for sn in snippets])
    matrix = normalize_rows(np.asarray(vectors, dtype=np.float32))
    return build_from_vectors(
        [sn.snippet_id for sn in snippets],
        matrix,
        mode=mode,
        degree=degree,
        construction_beam=construction_beam,
        search_beam=search_beam,
    )


def build_from_vectors(
    snippet_ids: list[str],
    matrix: np.ndarray,
    mode: str = MODE_EXACT,
    degree: int = DEFAULT_DEGREE,
    construction_beam: int = DEFAULT_CONSTRUCTION_BEAM,
    search_beam: int = DEFAULT_SEARCH_BEAM,
) -> DenseIndex:
    matrix = normalize_rows(np.asarray(matrix, dtype=np.float32))
    index = DenseIndex(
        snippet_ids=list(snippet_ids),
        matrix=matrix,
        mode=mode,
        degree=degree,
        construction_beam=construction_beam,
        search_beam=search_beam,
    )
    if mode == MODE_APPROXIMATE:
        index.neighbors = _build_nsw(matrix, degree, construction_beam)
    return index


def dense_search(
    index: DenseIndex,
    query_vector: np.ndarray,
    k: int = DEFAULT_K,
    allowed: set[str] | None = None,
) -> RankedList:
    """Top-k snippets by inner product, optionally restricted to `allowed` ids.

    Exact mode scans everything. Approximate mode runs the graph beam
    search; a filtered approximate query falls back to an exact scan over
    the allowed rows, which keeps filtering exact without per-pool graphs.
    """
    if k < 1:
        raise DenseIndexError(f"k must be >= 1, got {k}")
    query = np.asarray(query_vector, dtype=np.float32).reshape(-1)
    if query.shape[0] != index.dimension:
        raise DenseIndexError(
            f"query dimension {query.shape[0]} does not match index dimension {index.dimension}"
        )
    if index.mode == MODE_APPROXIMATE and allowed is None:
        beam = max(index.search_beam, k)
        found = _graph_search(index.matrix, index.neighbors, query, entry=0, beam=beam)
        ranked = sorted(
            ((index.snippet_ids[node], score) for score, node in found),
            key=lambda item: (-item[1], item[0]),
        )[:k]
        return RankedList(entries=tuple(ranked))
    return _exact_topk(index, query, k, allowed)


def _exact_topk(
    index: DenseIndex, query: np.ndarray, k: int, allowed: set[str] | None
) -> RankedList:
    if allowed is None:
        rows = None
        ids = np.asarray(index.snippet_ids)
        scores = index.matrix @ query
    else:
        rows = [index._row_of[sid] for sid in sorted(allowed) if sid in index._row_of]
        if not rows:
            return RankedList(entries=())
        ids = np.asarray([index.snippet_ids[r] for r in rows])
        scores = index.matrix[rows] @ query
    order = np.lexsort((ids, -scores))[:k]
    return RankedList(
        entries=tuple((str(ids[i]), float(scores[i])) for i in order)
    )


# --- NSW graph internals ------------------------------------------------


def _graph_search(
    matrix: np.ndarray,
    neighbors: list[list[int]],
    query: np.ndarray,
    entry: int,
    beam: int,
) -> list[tuple[float, int]]:
    """Greedy best-first beam search; returns up to `beam` (score, node) pairs, best first."""
    visited = np.zeros(matrix.shape[0], dtype=np.bool_)
    visited[entry] = True
    score = float(matrix[entry] @ query)
    candidates: list[tuple[float, int]] = [(-score, entry)]  # max-heap via negation
    best: list[tuple[float, int]] = [(score, entry)]  # min-heap, size <= beam
    while candidates:
        neg, node = heapq.heappop(candidates)
        if len(best) >= beam and -neg < best[0][0]:
            break
        fresh = [nb for nb in neighbors[node] if not visited[nb]]
        if not fresh:
            continue
        visited[fresh] = True
        sims = matrix[fresh] @ query
        for nb, s in zip(fresh, sims.tolist()):
            if len(best) < beam:
                heapq.heappush(best, (s, nb))
                heapq.heappush(candidates, (-s, nb))
            elif s > best[0][0]:
                heapq.heappushpop(best, (s, nb))
                heapq.heappush(candidates, (-s, nb))
    return sorted(best, key=lambda t: (-t[0], t[1]))


def _select_diverse(
    matrix: np.ndarray, candidates: list[tuple[float, int]], limit: int
) -> list[int]:
    """Keep candidates closer to the query than to anything already kept.

    This is the usual diversity heuristic: it spreads edges across
    directions instead of clustering them, which is what makes greedy
    routing work. Pruned candidates backfill remaining slots.
    """
    ordered = sorted(candidates, key=lambda t: (-t[0], t[1]))
    selected: list[int] = []
    pruned: list[int] = []
    for score, node in ordered:
        if len(selected) >= limit:
            break
        if not selected:
            selected.append(node)
            continue
        to_selected = matrix[selected] @ matrix[node]
        if score >= float(np.max(to_selected)):
            selected.append(node)
        else:
            pruned.append(node)
    for node in pruned:
        if len(selected) >= limit:
            break
        selected.append(node)
    return selected


def _build_nsw(matrix: np.ndarray, degree: int, construction_beam: int) -> list[list[int]]:
    """Insert nodes in row order, wiring each to a diversity-pruned neighbor set.

    Outgoing edges per insert are capped at `degree`; incoming edges are
    never pruned. In a flat graph the accumulated links of early nodes are
    the long-range routes greedy search depends on, so capping them (as
    hierarchical variants do on their base layer) collapses recall.
    """
    n = matrix.shape[0]
    neighbors: list[list[int]] = [[] for _ in range(n)]
    if n <= 1:
        return neighbors
    for i in range(1, n):
        query = matrix[i]
        found = _graph_search(matrix, neighbors, query, entry=0, beam=construction_beam)
        chosen = _select_diverse(matrix, found, degree)
        neighbors[i] = list(chosen)
        for nb in chosen:
            neighbors[nb].append(i)
    return neighbors
