"""Per-query pipeline orchestration and batch runs.

One query evaluation is the composition: extract claims -> ground them ->
obtain aspects (gold or generated, per variant) -> align grounded claims
to aspects (qrels-based for M, LLM-based for S/A) -> score. Per-query
failures are isolated: they are logged, counted, and excluded from the
aggregates rather than voiding the batch.

Variants:
    M   gold aspects, qrels alignment (corpus retrieval required)
    S   gold aspects, LLM alignment
    A   generated aspects, LLM alignment
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

from scipy.optimize import brentq

from .aspects import (
    AspectSet,
    Qrels,
    Topic,
    align_llm,
    align_manual,
    covered_aspects,
    generate_aspects,
    gold_aspects,
    load_qrels,
    load_topics,
)
from .bm25 import bm25_build, candidate_pool
from .claims import extract_claims
from .corpus import chunk_corpus, load_corpus
from .dense import dense_build
from .gateway import ModelGateway
from .grounding import CorpusRetriever, WebRetriever, ground_all
from .index_store import IndexBundle, corpus_fingerprint, read_index
from .prompts import DEFAULT_PROMPTS, PromptLibrary
from .responses import ResponseRecord, load_responses
from .scoring import ClaimTrace, AggregateReport, QueryReport, aggregate, icat_beta

logger = logging.getLogger(__name__)

VARIANTS = ("M", "S", "A")
RETRIEVAL_MODES = ("corpus", "web")


class ConfigError(ValueError):
    """Invalid run configuration; maps to exit code 2."""


class EvaluationError(RuntimeError):
    """Every query in the batch failed."""


@dataclass
class RunConfig:
    variant: str
    retrieval_mode: str
    beta: float = 1.0
    k_snippets: int = 10
    pool_size: int = 1000
    pooling: bool = True
    entail_threshold: float | None = None
    early_exit: bool = False
    workers: int = 1
    claim_workers: int = 1
    all_supporting: bool = False
    index_mode: str = "exact"
    beta_sweep: tuple[float, ...] = ()
    corpus_path: str | None = None
    index_dir: str | None = None
    topics_path: str | None = None
    qrels_path: str | None = None
    spam_threshold: int = 70
    max_words: int = 128
    overlap: int = 32

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.retrieval_mode not in RETRIEVAL_MODES:
            raise ConfigError(
                f"retrieval mode must be one of {RETRIEVAL_MODES}, got {self.retrieval_mode!r}"
            )
        if self.beta <= 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if any(b <= 0 for b in self.beta_sweep):
            raise ConfigError("beta_sweep values must be positive")
        if self.k_snippets < 1:
            raise ConfigError("k_snippets must be >= 1")
        if self.pool_size < 1:
            raise ConfigError("pool_size must be >= 1")
        if self.variant == "M" and self.retrieval_mode != "corpus":
            raise ConfigError("variant M requires corpus retrieval (qrels name corpus docs)")
        if self.variant == "M" and not self.qrels_path:
            raise ConfigError("variant M requires a qrels path")
        if not self.topics_path:
            raise ConfigError("a topics file is required (it defines the queries)")
        if self.retrieval_mode == "corpus" and not (self.corpus_path or self.index_dir):
            raise ConfigError("corpus retrieval needs --corpus or a prebuilt index dir")


@dataclass
class PipelineContext:
    config: RunConfig
    gateways: ModelGateway
    prompts: PromptLibrary = field(default_factory=lambda: DEFAULT_PROMPTS)
    topics: dict[str, Topic] = field(default_factory=dict)
    qrels: Qrels | None = None
    bundle: IndexBundle | None = None

    def retriever_for(self, topic: Topic):
        if self.config.retrieval_mode == "web":
            return WebRetriever(self.gateways.require("websearch"))
        assert self.bundle is not None
        allowed_docs = None
        if self.config.pooling:
            allowed_docs = candidate_pool(
                self.bundle.bm25, topic.title, self.config.pool_size
            )
        return CorpusRetriever(
            index=self.bundle.dense,
            snippet_texts=self.bundle.snippet_texts(),
            snippet_docs=self.bundle.snippet_docs(),
            embedding=self.gateways.require("embedding"),
            allowed_docs=allowed_docs,
        )

    def aspect_set_for(self, topic: Topic) -> AspectSet:
        if self.config.variant in ("M", "S"):
            return gold_aspects(topic)
        query_text = topic.description or topic.title
        return generate_aspects(
            query_text,
            self.gateways.require("chat"),
            self.prompts,
            query_id=topic.query_id,
        )


def evaluate_query(
    ctx: PipelineContext, topic: Topic, response: ResponseRecord
) -> QueryReport:
    """Run the full pipeline for one (query, response) pair."""
    cfg = ctx.config
    chat = ctx.gateways.require("chat")
    query_text = topic.description or topic.title
    aspect_set = ctx.aspect_set_for(topic)
    aspect_ids = aspect_set.ids()

    claims = extract_claims(
        response.text,
        chat,
        ctx.prompts,
        response_id=f"{response.query_id}/{response.system_id}",
    )
    if not claims:
        return QueryReport.build(
            query_id=topic.query_id,
            variant=cfg.variant,
            claims_total=0,
            claims_grounded=0,
            aspects_total=len(aspect_set.aspects),
            aspects_covered=(),
            beta=cfg.beta,
            trace=(),
            system_id=response.system_id,
        )

    retriever = ctx.retriever_for(topic)
    grounded, results = ground_all(
        claims,
        retriever,
        ctx.gateways.require("nli"),
        k=cfg.k_snippets,
        entail_threshold=cfg.entail_threshold,
        early_exit=cfg.early_exit,
        max_workers=cfg.claim_workers,
    )

    if cfg.variant == "M":
        assert ctx.qrels is not None
        alignment = align_manual(
            topic.query_id,
            results,
            ctx.qrels,
            aspect_ids=aspect_ids,
            all_supporting=cfg.all_supporting,
            entail_threshold=cfg.entail_threshold,
        )
    else:
        alignment = align_llm(query_text, aspect_set, grounded, chat, ctx.prompts)

    covered = covered_aspects(alignment) & aspect_ids
    trace = tuple(
        ClaimTrace(
            claim_id=claim.claim_id,
            text=claim.text,
            supported=result.supported,
            aspect_ids=tuple(sorted(alignment.mapping.get(claim.claim_id, frozenset()))),
            first_supporting_doc=result.first_supporting_doc,
            evidence=result.evidence,
        )
        for claim, result in zip(claims, results)
    )
    return QueryReport.build(
        query_id=topic.query_id,
        variant=cfg.variant,
        claims_total=len(claims),
        claims_grounded=len(grounded),
        aspects_total=len(aspect_set.aspects),
        aspects_covered=covered,
        beta=cfg.beta,
        trace=trace,
        system_id=response.system_id,
    )


def build_bundle(config: RunConfig, gateways: ModelGateway) -> IndexBundle:
    """Load the prebuilt index dir, or build one in memory from the corpus file."""
    if config.index_dir and Path(config.index_dir, "manifest.json").exists():
        return read_index(config.index_dir)
    if not config.corpus_path:
        raise ConfigError("no index dir and no corpus path to build from")
    docs = load_corpus(config.corpus_path, spam_threshold=config.spam_threshold)
    if not docs:
        raise ConfigError(f"corpus {config.corpus_path} is empty after spam filtering")
    snippets = chunk_corpus(docs, max_words=config.max_words, overlap=config.overlap)
    dense = dense_build(snippets, gateways.require("embedding"), mode=config.index_mode)
    return IndexBundle(
        dense=dense,
        bm25=bm25_build(docs),
        snippets=snippets,
        fingerprint=corpus_fingerprint(docs),
    )


@dataclass
class RunResult:
    config: RunConfig
    reports: list[QueryReport]
    aggregates: dict[str, AggregateReport]
    failures: list[dict]
    sweep_rows: list[tuple[str, float, float]] = field(default_factory=list)
    crossovers: list[dict] = field(default_factory=list)
    total: int = 0

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0


def prepare_context(
    config: RunConfig,
    gateways: ModelGateway,
    prompts: PromptLibrary = DEFAULT_PROMPTS,
) -> PipelineContext:
    config.validate()
    ctx = PipelineContext(config=config, gateways=gateways, prompts=prompts)
    ctx.topics = load_topics(config.topics_path)
    if config.variant == "M":
        ctx.qrels = load_qrels(config.qrels_path)
    if config.retrieval_mode == "corpus":
        ctx.bundle = build_bundle(config, gateways)
    return ctx


def run(
    config: RunConfig,
    gateways: ModelGateway,
    responses_path: str | Path,
    prompts: PromptLibrary = DEFAULT_PROMPTS,
) -> RunResult:
    """Evaluate every response record; aggregate per system; sweep beta if asked."""
    ctx = prepare_context(config, gateways, prompts)
    responses = load_responses(responses_path)
    if not responses:
        raise ConfigError(f"no responses in {responses_path}")
    unknown = sorted({r.query_id for r in responses} - set(ctx.topics))
    if unknown:
        raise ConfigError(f"responses reference unknown query ids: {unknown}")

    jobs = sorted(responses, key=lambda r: (r.system_id, r.query_id))

    def one(record: ResponseRecord):
        try:
            return evaluate_query(ctx, ctx.topics[record.query_id], record), None
        except Exception as exc:  # per-query isolation is the contract here
            logger.error(
                "query %s / system %s failed: %s", record.query_id, record.system_id, exc
            )
            return None, {
                "query_id": record.query_id,
                "system_id": record.system_id,
                "error": str(exc),
            }

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(one, jobs))
    else:
        outcomes = [one(job) for job in jobs]

    reports = [report for report, _ in outcomes if report is not None]
    failures = [failure for _, failure in outcomes if failure is not None]
    if not reports:
        raise EvaluationError(
            f"all {len(jobs)} queries failed; first error: {failures[0]['error']}"
        )

    by_system: dict[str, list[QueryReport]] = {}
    for report in reports:
        by_system.setdefault(report.system_id, []).append(report)
    attempted = {record.system_id: 0 for record in jobs}
    for record in jobs:
        attempted[record.system_id] += 1
    aggregates = {
        system: aggregate(sorted(rs, key=lambda r: r.query_id), total=attempted[system])
        for system, rs in sorted(by_system.items())
    }

    result = RunResult(
        config=config,
        reports=reports,
        aggregates=aggregates,
        failures=failures,
        total=len(jobs),
    )
    if config.beta_sweep:
        result.sweep_rows = sweep_rows(by_system, config.beta_sweep)
        result.crossovers = find_crossovers(by_system, config.beta_sweep)
    return result


# --- beta sweep ----------------------------------------------------------


def mean_icat_at(reports: list[QueryReport], beta: float) -> float:
    """Macro mean of per-query ICAT recomputed at an arbitrary beta.

    Only the combination changes with beta; per-query factuality and
    coverage are invariant.
    """
    return sum(icat_beta(r.scores.s_fact, r.scores.s_coverage, beta) for r in reports) / len(
        reports
    )


def sweep_rows(
    by_system: dict[str, list[QueryReport]], betas: tuple[float, ...]
) -> list[tuple[str, float, float]]:
    rows = []
    for system in sorted(by_system):
        for beta in sorted(betas):
            rows.append((system, beta, mean_icat_at(by_system[system], beta)))
    return rows


def find_crossovers(
    by_system: dict[str, list[QueryReport]], betas: tuple[float, ...]
) -> list[dict]:
    """Betas within the sweep range where two systems' mean-ICAT curves cross."""
    grid = sorted(set(betas))
    out: list[dict] = []
    for sys_a, sys_b in combinations(sorted(by_system), 2):

        def gap(beta: float) -> float:
            return mean_icat_at(by_system[sys_a], beta) - mean_icat_at(by_system[sys_b], beta)

        for lo, hi in zip(grid, grid[1:]):
            g_lo, g_hi = gap(lo), gap(hi)
            if g_lo == 0.0:
                out.append({"system_a": sys_a, "system_b": sys_b, "beta": lo})
            elif g_lo * g_hi < 0.0:
                root = float(brentq(gap, lo, hi, xtol=1e-10))
                out.append({"system_a": sys_a, "system_b": sys_b, "beta": root})
        if grid and gap(grid[-1]) == 0.0:
            out.append({"system_a": sys_a, "system_b": sys_b, "beta": grid[-1]})
    return out


def export_coverage_scores(reports: list[QueryReport]) -> list[tuple[str, str, float]]:
    """(query_id, system_id, s_coverage) rows for correlation against human scores."""
    return [
        (r.query_id, r.system_id, r.scores.s_coverage)
        for r in sorted(reports, key=lambda r: (r.system_id, r.query_id))
    ]


# --- serialization -------------------------------------------------------


def report_to_dict(report: QueryReport) -> dict:
    return {
        "query_id": report.query_id,
        "system_id": report.system_id,
        "variant": report.variant,
        "claims_total": report.claims_total,
        "claims_grounded": report.claims_grounded,
        "aspects_total": report.aspects_total,
        "aspects_covered": sorted(report.aspects_covered),
        "s_fact": report.scores.s_fact,
        "s_coverage": report.scores.s_coverage,
        "icat": report.icat,
        "beta": report.beta,
        "trace": [
            {
                "claim_id": t.claim_id,
                "text": t.text,
                "supported": t.supported,
                "aspect_ids": list(t.aspect_ids),
                "first_supporting_doc": t.first_supporting_doc,
                "evidence": [
                    {
                        "snippet_id": e.snippet_id,
                        "doc_id": e.doc_id,
                        "rank": e.rank,
                        "nli_label": e.nli_label,
                        "entail_probability": e.entail_probability,
                    }
                    for e in t.evidence
                ],
            }
            for t in report.trace
        ],
    }


def aggregate_to_dict(report: AggregateReport) -> dict:
    return {
        "system_id": report.system_id,
        "variant": report.variant,
        "beta": report.beta,
        "mean_s_fact": report.mean_s_fact,
        "mean_s_coverage": report.mean_s_coverage,
        "mean_icat": report.mean_icat,
        "evaluated": report.evaluated,
        "total": report.total,
        "per_query": [report_to_dict(r) for r in report.per_query],
    }


def result_to_dict(result: RunResult) -> dict:
    return {
        "variant": result.config.variant,
        "retrieval_mode": result.config.retrieval_mode,
        "beta": result.config.beta,
        "evaluated": len(result.reports),
        "total": result.total,
        "systems": {
            system: aggregate_to_dict(agg) for system, agg in result.aggregates.items()
        },
        "failures": sorted(
            result.failures, key=lambda f: (f["system_id"], f["query_id"])
        ),
        "beta_sweep": [
            {"system_id": s, "beta": b, "mean_icat": v} for s, b, v in result.sweep_rows
        ],
        "crossovers": result.crossovers,
    }


def write_outputs(result: RunResult, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps(result_to_dict(result), indent=2, sort_keys=True, ensure_ascii=False)
        + "\n",
        encoding="utf-8",
    )
    with open(out_dir / "scores.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["system_id", "query_id", "s_fact", "s_coverage", "icat"])
        for report in sorted(result.reports, key=lambda r: (r.system_id, r.query_id)):
            writer.writerow(
                [
                    report.system_id,
                    report.query_id,
                    repr(report.scores.s_fact),
                    repr(report.scores.s_coverage),
                    repr(report.icat),
                ]
            )
    with open(out_dir / "method_coverage.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["query_id", "system_id", "s_coverage"])
        for query_id, system_id, s_coverage in export_coverage_scores(result.reports):
            writer.writerow([query_id, system_id, repr(s_coverage)])
    if result.sweep_rows:
        with open(out_dir / "beta_sweep.csv", "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["system_id", "beta", "mean_icat"])
            for system, beta, value in result.sweep_rows:
                writer.writerow([system, repr(beta), repr(value)])
        (out_dir / "crossovers.json").write_text(
            json.dumps(result.crossovers, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
