"""Score arithmetic: factuality, aspect coverage, and the combined ICAT metric.

Everything in this module is pure arithmetic over immutable values; the
pipeline state (claims, grounding evidence, alignments) only appears here
as already-computed counts and traces inside the report types.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

DEFAULT_BETA = 1.0


class ScoreError(ValueError):
    """A score input violated its contract."""


def factuality_score(claims_total: int, claims_grounded: int) -> float:
    """Fraction of extracted claims that were grounded against the knowledge source.

    A response that produced no verifiable claims scores 0 rather than
    erroring: an empty claim set is a failing response, and batch runs
    must stay total.
    """
    if claims_total < 0 or claims_grounded < 0:
        raise ScoreError("claim counts must be non-negative")
    if claims_grounded > claims_total:
        raise ScoreError(
            f"grounded claims ({claims_grounded}) exceed total claims ({claims_total})"
        )
    if claims_total == 0:
        return 0.0
    return claims_grounded / claims_total


def coverage_score(covered: Iterable[str], all_aspects: Iterable[str]) -> float:
    """Fraction of the query's aspects touched by at least one grounded claim.

    Aspect ids in `covered` that are not part of `all_aspects` are dropped
    by the intersection. `covered` must be computed from grounded claims
    only; that is the caller's contract.
    """
    aspect_ids = set(all_aspects)
    if not aspect_ids:
        raise ScoreError("query has no aspects")
    return len(set(covered) & aspect_ids) / len(aspect_ids)


def icat_beta(s_fact: float, s_coverage: float, beta: float = DEFAULT_BETA) -> float:
    """Weighted harmonic mean of factuality and coverage.

        (1 + beta^2) * s_fact * s_coverage / (beta^2 * s_fact + s_coverage)

    beta > 1 weights coverage more heavily, beta < 1 weights factuality;
    beta = 1 is the balanced default. Returns 0 whenever either score is 0
    (the F-measure convention for a zero denominator).
    """
    if beta <= 0:
        raise ScoreError(f"beta must be positive, got {beta}")
    if not (0.0 <= s_fact <= 1.0) or not (0.0 <= s_coverage <= 1.0):
        raise ScoreError(
            f"scores must lie in [0, 1], got s_fact={s_fact}, s_coverage={s_coverage}"
        )
    if s_fact == 0.0 or s_coverage == 0.0:
        return 0.0
    b2 = beta * beta
    return (1.0 + b2) * s_fact * s_coverage / (b2 * s_fact + s_coverage)


@dataclass(frozen=True)
class ScorePair:
    """A (factuality, coverage) pair for one query."""

    s_fact: float
    s_coverage: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.s_fact <= 1.0):
            raise ScoreError(f"s_fact out of [0, 1]: {self.s_fact}")
        if not (0.0 <= self.s_coverage <= 1.0):
            raise ScoreError(f"s_coverage out of [0, 1]: {self.s_coverage}")


@dataclass(frozen=True)
class ClaimTrace:
    """Per-claim trail kept for interpretability: verdict, evidence, aspects."""

    claim_id: int
    text: str
    supported: bool
    aspect_ids: tuple[str, ...] = ()
    first_supporting_doc: str | None = None
    # grounding.Evidence entries, kept loosely typed to keep this module leaf-level
    evidence: tuple = ()


@dataclass(frozen=True)
class QueryReport:
    """Full evaluation record for one (query, response) pair."""

    query_id: str
    variant: str  # "M" | "S" | "A"
    claims_total: int
    claims_grounded: int
    aspects_total: int
    aspects_covered: frozenset[str]
    scores: ScorePair
    icat: float
    beta: float
    trace: tuple[ClaimTrace, ...] = ()
    system_id: str = ""

    def __post_init__(self) -> None:
        if self.variant not in ("M", "S", "A"):
            raise ScoreError(f"unknown variant {self.variant!r}")
        if self.claims_grounded > self.claims_total:
            raise ScoreError("claims_grounded exceeds claims_total")
        if len(self.aspects_covered) > self.aspects_total:
            raise ScoreError("covered aspects exceed aspects_total")
        expected = icat_beta(self.scores.s_fact, self.scores.s_coverage, self.beta)
        if self.icat != expected:
            raise ScoreError(
                f"icat {self.icat!r} inconsistent with scores (expected {expected!r})"
            )

    @classmethod
    def build(
        cls,
        query_id: str,
        variant: str,
        claims_total: int,
        claims_grounded: int,
        aspects_total: int,
        aspects_covered: Iterable[str],
        beta: float = DEFAULT_BETA,
        trace: Sequence[ClaimTrace] = (),
        system_id: str = "",
    ) -> "QueryReport":
        """Compute the scores from the raw counts and assemble a consistent report."""
        covered = frozenset(aspects_covered)
        s_fact = factuality_score(claims_total, claims_grounded)
        if claims_total == 0:
            # Empty-claim convention: a response with nothing verifiable
            # covers nothing, regardless of how many aspects exist.
            s_coverage = 0.0
        else:
            s_coverage = len(covered) / aspects_total if aspects_total else 0.0
        scores = ScorePair(s_fact, s_coverage)
        return cls(
            query_id=query_id,
            variant=variant,
            claims_total=claims_total,
            claims_grounded=claims_grounded,
            aspects_total=aspects_total,
            aspects_covered=covered,
            scores=scores,
            icat=icat_beta(s_fact, s_coverage, beta),
            beta=beta,
            trace=tuple(trace),
            system_id=system_id,
        )


@dataclass(frozen=True)
class AggregateReport:
    """Macro average of per-query reports (mean of per-query values).

    mean_icat is the mean of per-query ICAT values; it is NOT in general
    icat_beta(mean_s_fact, mean_s_coverage, beta) because the harmonic
    mean does not commute with the arithmetic mean.
    """

    per_query: tuple[QueryReport, ...]
    mean_s_fact: float
    mean_s_coverage: float
    mean_icat: float
    beta: float
    variant: str = ""
    system_id: str = ""
    evaluated: int = 0
    total: int = field(default=0)


def aggregate(reports: Sequence[QueryReport], total: int | None = None) -> AggregateReport:
    """Macro-average a batch of per-query reports.

    All reports must share one beta and one variant; `total` may record how
    many (query, response) pairs were attempted when some failed upstream.
    """
    if not reports:
        raise ScoreError("cannot aggregate an empty report list")
    betas = {r.beta for r in reports}
    variants = {r.variant for r in reports}
    if len(betas) > 1:
        raise ScoreError(f"mixed beta values in aggregation: {sorted(betas)}")
    if len(variants) > 1:
        raise ScoreError(f"mixed variants in aggregation: {sorted(variants)}")
    systems = {r.system_id for r in reports}
    n = len(reports)
    return AggregateReport(
        per_query=tuple(reports),
        mean_s_fact=sum(r.scores.s_fact for r in reports) / n,
        mean_s_coverage=sum(r.scores.s_coverage for r in reports) / n,
        mean_icat=sum(r.icat for r in reports) / n,
        beta=betas.pop(),
        variant=variants.pop(),
        system_id=systems.pop() if len(systems) == 1 else "",
        evaluated=n,
        total=n if total is None else total,
    )
