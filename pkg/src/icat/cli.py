"""Command-line entry points.

    icat ingest          load + spam-filter a corpus, chunk it, stage for indexing
    icat index build     build the BM25 + dense index directory
    icat index search    debug searches against an index
    icat claims extract  decompose responses into atomic claims
    icat claims synth    generate the synthetic claim-extraction training set
    icat run             full evaluation batch (variants M/S/A)
    icat correlate       correlate method scores against human scores
    icat annotate        prepare tasks / serve the annotation service

Exit codes for `icat run`: 0 success, 1 partial (some queries failed),
2 configuration error.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
from pathlib import Path

import click

from . import evaluator
from .annotation import AnnotationStore, create_tasks, task_from_dict, task_to_dict
from .aspects import gold_aspects, load_topics
from .bm25 import bm25_build, bm25_search
from .claims import extract_claims, generate_synthetic_data, write_synthetic_jsonl
from .config import build_gateways, build_prompts, load_config_file
from .corpus import chunk_corpus, load_corpus
from .dense import dense_build, dense_search
from .evaluator import ConfigError, RunConfig
from .index_store import IndexBundle, corpus_fingerprint, read_index, write_index
from .responses import load_responses
from .stats import correlate

logger = logging.getLogger(__name__)


def _read_score_csv(path: str) -> dict[tuple[str, str], float]:
    scores: dict[tuple[str, str], float] = {}
    with open(path, encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            value = row.get("s_coverage") or row.get("human_s_coverage") or row.get("score")
            if value is None:
                raise click.ClickException(
                    f"{path}: need a s_coverage/human_s_coverage/score column"
                )
            scores[(row["query_id"], row["system_id"])] = float(value)
    return scores


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="debug logging")
def main(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--spam-threshold", default=70, show_default=True)
@click.option("--max-words", default=128, show_default=True)
@click.option("--overlap", default=32, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def ingest(corpus_path, spam_threshold, max_words, overlap, out_dir):
    """Filter and chunk a corpus into a staging directory for `index build`."""
    docs = load_corpus(corpus_path, spam_threshold=spam_threshold)
    snippets = chunk_corpus(docs, max_words=max_words, overlap=overlap)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "docs.jsonl", "w", encoding="utf-8") as handle:
        for doc in docs:
            record = {"doc_id": doc.doc_id, "text": doc.text}
            if doc.url is not None:
                record["url"] = doc.url
            if doc.spam_percentile is not None:
                record["spam_percentile"] = doc.spam_percentile
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    with open(out / "snippets.jsonl", "w", encoding="utf-8") as handle:
        for sn in snippets:
            handle.write(
                json.dumps(
                    {
                        "snippet_id": sn.snippet_id,
                        "doc_id": sn.doc_id,
                        "word_start": sn.word_start,
                        "word_end": sn.word_end,
                        "text": sn.text,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    (out / "ingest.json").write_text(
        json.dumps(
            {
                "documents": len(docs),
                "snippets": len(snippets),
                "spam_threshold": spam_threshold,
                "max_words": max_words,
                "overlap": overlap,
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    click.echo(f"ingested {len(docs)} documents -> {len(snippets)} snippets in {out}")


@main.group()
def index() -> None:
    """Build or query the retrieval indexes."""


@index.command("build")
@click.option("--ingest-dir", "ingest_dir", type=click.Path(exists=True),
              help="staging dir from `icat ingest` (else use --corpus)")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["exact", "approximate"]), default="exact",
              show_default=True)
@click.option("--max-words", default=128, show_default=True)
@click.option("--overlap", default=32, show_default=True)
@click.option("--spam-threshold", default=70, show_default=True)
@click.option("--degree", default=16, show_default=True)
@click.option("--construction-beam", default=100, show_default=True)
@click.option("--search-beam", default=64, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def index_build(ingest_dir, corpus_path, config_path, mode, max_words, overlap,
                spam_threshold, degree, construction_beam, search_beam, out_dir):
    """Embed snippets and write the index directory (BM25 + dense)."""
    gateways = build_gateways(load_config_file(config_path))
    if ingest_dir:
        docs = load_corpus(Path(ingest_dir) / "docs.jsonl", spam_threshold=0)
    elif corpus_path:
        docs = load_corpus(corpus_path, spam_threshold=spam_threshold)
    else:
        raise click.ClickException("need --ingest-dir or --corpus")
    snippets = chunk_corpus(docs, max_words=max_words, overlap=overlap)
    dense = dense_build(
        snippets,
        gateways.require("embedding"),
        mode=mode,
        degree=degree,
        construction_beam=construction_beam,
        search_beam=search_beam,
    )
    bundle = IndexBundle(
        dense=dense,
        bm25=bm25_build(docs),
        snippets=snippets,
        fingerprint=corpus_fingerprint(docs),
    )
    write_index(out_dir, bundle)
    click.echo(f"indexed {len(docs)} docs / {len(snippets)} snippets -> {out_dir}")


@index.command("search")
@click.option("--index", "index_dir", required=True, type=click.Path(exists=True))
@click.option("--query", required=True)
@click.option("--k", default=10, show_default=True)
@click.option("--lexical", is_flag=True, help="BM25 over documents instead of dense snippets")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="needed for dense search (embedding backend)")
def index_search(index_dir, query, k, lexical, config_path):
    """Debugging searches against a built index."""
    bundle = read_index(index_dir)
    if lexical:
        ranked = bm25_search(bundle.bm25, query, k)
    else:
        if not config_path:
            raise click.ClickException("dense search needs --config for the embedding backend")
        gateways = build_gateways(load_config_file(config_path))
        vector = gateways.require("embedding").embed([query])[0]
        ranked = dense_search(bundle.dense, vector, k=k)
    for item_id, score in ranked:
        click.echo(f"{score:.6f}\t{item_id}")


@main.group()
def claims() -> None:
    """Atomic-claim operations."""


@claims.command("extract")
@click.option("--responses", "responses_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def claims_extract(responses_path, config_path, out_path):
    """Extract atomic claims for every response record."""
    config = load_config_file(config_path)
    gateways = build_gateways(config)
    prompts = build_prompts(config)
    chat = gateways.require("chat")
    records = load_responses(responses_path)
    with open(out_path, "w", encoding="utf-8") as handle:
        for record in records:
            extracted = extract_claims(
                record.text, chat, prompts,
                response_id=f"{record.query_id}/{record.system_id}",
            )
            handle.write(
                json.dumps(
                    {
                        "query_id": record.query_id,
                        "system_id": record.system_id,
                        "claims": [
                            {"claim_id": c.claim_id, "text": c.text} for c in extracted
                        ],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    click.echo(f"claims for {len(records)} responses -> {out_path}")


@claims.command("synth")
@click.option("--topics", "n_topics", default=200, show_default=True)
@click.option("--entities", "entities_per_topic", default=5, show_default=True)
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def claims_synth(n_topics, entities_per_topic, config_path, out_path):
    """Generate the synthetic (paragraph, claims) training JSONL."""
    config = load_config_file(config_path)
    gateways = build_gateways(config)
    prompts = build_prompts(config)
    examples = generate_synthetic_data(
        gateways.require("chat"),
        n_topics=n_topics,
        entities_per_topic=entities_per_topic,
        prompts=prompts,
    )
    write_synthetic_jsonl(examples, out_path)
    click.echo(f"{len(examples)} synthetic examples -> {out_path}")


@main.command("run")
@click.option("--variant", type=click.Choice(["M", "S", "A"]), required=True)
@click.option("--retrieval", type=click.Choice(["corpus", "web"]), default="corpus",
              show_default=True)
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--responses", "responses_path", required=True, type=click.Path(exists=True))
@click.option("--topics", "topics_path", type=click.Path(exists=True))
@click.option("--qrels", "qrels_path", type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", type=click.Path(exists=True))
@click.option("--index-dir", type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--beta", default=1.0, show_default=True)
@click.option("--beta-sweep", default="", help="comma-separated betas, e.g. 0.5,1,2")
@click.option("--k-snippets", default=10, show_default=True)
@click.option("--pool-size", default=1000, show_default=True)
@click.option("--no-pooling", is_flag=True)
@click.option("--entail-threshold", type=float, default=None)
@click.option("--all-supporting", is_flag=True)
@click.option("--workers", default=1, show_default=True)
def run_cmd(variant, retrieval, config_path, responses_path, topics_path, qrels_path,
            corpus_path, index_dir, out_dir, beta, beta_sweep, k_snippets, pool_size,
            no_pooling, entail_threshold, all_supporting, workers):
    """Evaluate a batch of responses and write reports."""
    config_file = load_config_file(config_path)
    run_section = config_file.get("run", {})
    try:
        sweep = tuple(float(x) for x in beta_sweep.split(",") if x.strip())
        run_config = RunConfig(
            variant=variant,
            retrieval_mode=retrieval,
            beta=beta,
            k_snippets=k_snippets,
            pool_size=pool_size,
            pooling=not no_pooling and bool(run_section.get("pooling", True)),
            entail_threshold=entail_threshold
            if entail_threshold is not None
            else run_section.get("entail_threshold"),
            early_exit=bool(run_section.get("early_exit", False)),
            workers=workers,
            claim_workers=int(run_section.get("claim_workers", 1)),
            all_supporting=all_supporting,
            index_mode=run_section.get("index_mode", "exact"),
            beta_sweep=sweep,
            corpus_path=corpus_path or run_section.get("corpus_path"),
            index_dir=index_dir or run_section.get("index_dir"),
            topics_path=topics_path or run_section.get("topics_path"),
            qrels_path=qrels_path or run_section.get("qrels_path"),
        )
        gateways = build_gateways(config_file)
        prompts = build_prompts(config_file)
        result = evaluator.run(run_config, gateways, responses_path, prompts)
    except (ConfigError, click.ClickException) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    evaluator.write_outputs(result, out_dir)
    for system, agg in result.aggregates.items():
        click.echo(
            f"{system}: s_fact={agg.mean_s_fact:.4f} s_coverage={agg.mean_s_coverage:.4f} "
            f"icat_{agg.beta:g}={agg.mean_icat:.4f} ({agg.evaluated}/{agg.total} queries)"
        )
    if result.failures:
        click.echo(f"{len(result.failures)} queries failed; see report.json", err=True)
    sys.exit(result.exit_code)


@main.command("correlate")
@click.option("--method-scores", "method_path", required=True, type=click.Path(exists=True))
@click.option("--human-scores", "human_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def correlate_cmd(method_path, human_path, out_path):
    """Pearson/Spearman/Kendall between method and human coverage scores."""
    result = correlate(_read_score_csv(method_path), _read_score_csv(human_path))
    payload = {
        "pearson": result.pearson,
        "spearman": result.spearman,
        "kendall_tau": result.kendall_tau,
        "n_pairs": result.n_pairs,
    }
    Path(out_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    click.echo(json.dumps(payload, sort_keys=True))


@main.group()
def annotate() -> None:
    """Human-annotation service."""


@annotate.command("prepare")
@click.option("--responses", "responses_path", required=True, type=click.Path(exists=True))
@click.option("--topics", "topics_path", required=True, type=click.Path(exists=True))
@click.option("--required-annotators", default=3, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def annotate_prepare(responses_path, topics_path, required_annotators, out_dir):
    """Create annotation tasks (gold aspects) from responses + topics."""
    topics = load_topics(topics_path)
    records = load_responses(responses_path)
    aspects_by_query = {qid: gold_aspects(t) for qid, t in topics.items()}
    query_texts = {qid: t.description or t.title for qid, t in topics.items()}
    tasks = create_tasks(
        records, aspects_by_query, query_texts, required_annotators=required_annotators
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "tasks.jsonl", "w", encoding="utf-8") as handle:
        for task in tasks:
            handle.write(json.dumps(task_to_dict(task), ensure_ascii=False) + "\n")
    click.echo(f"{len(tasks)} tasks -> {out / 'tasks.jsonl'}")


@annotate.command("serve")
@click.option("--tasks", "tasks_dir", required=True, type=click.Path(exists=True))
@click.option("--store", "store_path", required=True, type=click.Path())
@click.option("--port", default=8710, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(exists=True),
              help="static UI bundle to serve at /")
def annotate_serve(tasks_dir, store_path, port, host, ui_dir):
    """Serve the annotation HTTP API (and the UI, when provided)."""
    import uvicorn

    from .server import create_app

    store = AnnotationStore(store_path)
    tasks_file = Path(tasks_dir) / "tasks.jsonl"
    if tasks_file.exists():
        tasks = [
            task_from_dict(json.loads(line))
            for line in tasks_file.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        added = store.add_tasks(tasks)
        click.echo(f"registered {added} new tasks ({len(tasks)} in file)")
    uvicorn.run(create_app(store, ui_dir=ui_dir), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
