"""Correlation and agreement statistics for the human-validation workflow.

Everything is computed exactly at desk scale: no large-n approximations,
no p-values (coefficients and pair counts only; significance testing is
left to downstream analysis).

    pearson        product-moment correlation
    spearman       pearson over average (fractional) ranks
    kendall_tau    tau-b: (C - D) / sqrt((n0 - n1) (n0 - n2))
    fleiss_kappa   (P_bar - Pe_bar) / (1 - Pe_bar)
    majority_vote  per-item binary majority across raters
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class PairedSample:
    pairs: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.pairs) < 2:
            raise StatsError("paired sample needs at least 2 pairs")


@dataclass(frozen=True)
class RatingMatrix:
    """items x categories counts of rater votes; every row sums to raters_per_item."""

    items: tuple[str, ...]
    categories: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]
    raters_per_item: int

    def __post_init__(self) -> None:
        if len(self.counts) != len(self.items):
            raise StatsError("counts rows must match items")
        for item, row in zip(self.items, self.counts):
            if len(row) != len(self.categories):
                raise StatsError(f"row for {item!r} does not match categories")
            if any(c < 0 for c in row):
                raise StatsError(f"negative count for {item!r}")
            if sum(row) != self.raters_per_item:
                raise StatsError(
                    f"row for {item!r} sums to {sum(row)}, expected {self.raters_per_item}"
                )


def _as_xy(sample) -> tuple[np.ndarray, np.ndarray]:
    pairs = sample.pairs if isinstance(sample, PairedSample) else tuple(sample)
    if len(pairs) < 2:
        raise StatsError("need at least 2 pairs")
    xs = np.asarray([p[0] for p in pairs], dtype=np.float64)
    ys = np.asarray([p[1] for p in pairs], dtype=np.float64)
    return xs, ys


def pearson(sample) -> float:
    """Product-moment correlation; errors on zero variance."""
    xs, ys = _as_xy(sample)
    xm = xs - xs.mean()
    ym = ys - ys.mean()
    sxx = float(xm @ xm)
    syy = float(ym @ ym)
    if sxx == 0.0 or syy == 0.0:
        raise StatsError("degenerate sample: a variable has zero variance")
    return float(xm @ ym) / math.sqrt(sxx * syy)


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks with ties assigned the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for idx in order[i : j + 1]:
            ranks[idx] = mean_rank
        i = j + 1
    return ranks


def spearman(sample) -> float:
    """Pearson correlation of the rank vectors (average ranks for ties)."""
    xs, ys = _as_xy(sample)
    return pearson(list(zip(average_ranks(xs.tolist()), average_ranks(ys.tolist()))))


def kendall_tau(sample) -> float:
    """Tau-b with the standard tie corrections.

        n0 = n(n-1)/2,  n1 = sum over x-tie groups t(t-1)/2,  n2 likewise for y
        tau_b = (concordant - discordant) / sqrt((n0 - n1)(n0 - n2))
    """
    xs, ys = _as_xy(sample)
    n = len(xs)
    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = xs[i] - xs[j]
            dy = ys[i] - ys[j]
            product = dx * dy
            if product > 0:
                concordant += 1
            elif product < 0:
                discordant += 1
    n0 = n * (n - 1) // 2
    n1 = sum(t * (t - 1) // 2 for t in Counter(xs.tolist()).values())
    n2 = sum(t * (t - 1) // 2 for t in Counter(ys.tolist()).values())
    denominator = math.sqrt((n0 - n1) * (n0 - n2))
    if denominator == 0.0:
        raise StatsError("degenerate sample: all values tied on one side")
    return (concordant - discordant) / denominator


def fleiss_kappa(matrix: RatingMatrix) -> float:
    """Chance-corrected agreement among a fixed number of raters.

        P_i    = (sum_j n_ij^2 - n) / (n (n - 1))      per-item agreement
        p_j    = column sum / (N n)                    category marginals
        kappa  = (mean(P_i) - sum_j p_j^2) / (1 - sum_j p_j^2)
    """
    n = matrix.raters_per_item
    if n < 2:
        raise StatsError("fleiss_kappa needs at least 2 raters per item")
    counts = np.asarray(matrix.counts, dtype=np.float64)
    if counts.shape[0] < 2:
        raise StatsError("fleiss_kappa needs at least 2 items")
    p_i = (np.sum(counts * counts, axis=1) - n) / (n * (n - 1))
    p_bar = float(np.mean(p_i))
    p_j = np.sum(counts, axis=0) / (counts.shape[0] * n)
    pe_bar = float(np.sum(p_j * p_j))
    if pe_bar >= 1.0:
        raise StatsError("degenerate agreement: every rating is in one category")
    return (p_bar - pe_bar) / (1.0 - pe_bar)


def majority_vote(
    votes: Sequence[Sequence[int]], tie_rule: str | None = None
) -> list[int]:
    """Per-item binary majority; item positive iff positives > n/2.

    n must be odd unless a tie rule ("positive" or "negative") is given.
    """
    if tie_rule not in (None, "positive", "negative"):
        raise StatsError(f"unknown tie rule {tie_rule!r}")
    out: list[int] = []
    for i, item_votes in enumerate(votes):
        n = len(item_votes)
        if n == 0:
            raise StatsError(f"item {i} has no votes")
        if n % 2 == 0 and tie_rule is None:
            raise StatsError(f"item {i} has an even number of raters ({n}) and no tie rule")
        if any(v not in (0, 1) for v in item_votes):
            raise StatsError(f"item {i} has non-binary votes")
        positives = sum(item_votes)
        if positives * 2 > n:
            out.append(1)
        elif positives * 2 < n:
            out.append(0)
        else:
            out.append(1 if tie_rule == "positive" else 0)
    return out


@dataclass(frozen=True)
class CorrelationResult:
    pearson: float
    spearman: float
    kendall_tau: float
    n_pairs: int


def correlate(
    method_scores: Mapping[tuple[str, str], float],
    human_scores: Mapping[tuple[str, str], float],
) -> CorrelationResult:
    """Inner-join two score tables on (query_id, system_id) and correlate."""
    keys = sorted(set(method_scores) & set(human_scores))
    if len(keys) < 2:
        raise StatsError(
            f"need at least 2 joined pairs, got {len(keys)} "
            "(check that the key sets overlap)"
        )
    pairs = [(method_scores[key], human_scores[key]) for key in keys]
    return CorrelationResult(
        pearson=pearson(pairs),
        spearman=spearman(pairs),
        kendall_tau=kendall_tau(pairs),
        n_pairs=len(keys),
    )
