"""ICAT: factual-accuracy and aspect-coverage evaluation for long-form LLM output.

The engine decomposes a response into atomic claims, grounds each claim by
retrieval + NLI over a knowledge source (corpus or web search), aligns the
grounded claims with the query's aspects, and combines the factuality and
coverage ratios into the ICAT_beta score. It also ships the statistics and
the annotation service used to validate the metric against human judges.
"""

from .scoring import (
    AggregateReport,
    ClaimTrace,
    QueryReport,
    ScorePair,
    aggregate,
    coverage_score,
    factuality_score,
    icat_beta,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateReport",
    "ClaimTrace",
    "QueryReport",
    "ScorePair",
    "aggregate",
    "coverage_score",
    "factuality_score",
    "icat_beta",
    "__version__",
]
