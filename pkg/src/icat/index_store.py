"""On-disk index layout.

A self-describing directory: `manifest.json` records the dimension, mode,
graph parameters, corpus fingerprint, and the file names of every part.
Vectors are raw little-endian float32, row-major; everything else is JSON
or JSON Lines.

    manifest.json      index metadata (see write_index)
    vectors.f32        snippet vectors, row-major '<f4'
    snippet_ids.json   row order -> snippet id
    snippets.jsonl     snippet metadata incl. text (NLI premises)
    graph.json         NSW adjacency lists (approximate mode only)
    bm25_postings.jsonl  one term per line: {"t": term, "p": [[doc_id, tf], ...]}
    doc_lengths.json   BM25 document lengths
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bm25 import Bm25Index
from .corpus import Document, Snippet
from .dense import DenseIndex

FORMAT_VERSION = 1


class IndexStoreError(ValueError):
    pass


def corpus_fingerprint(docs: list[Document]) -> str:
    digest = hashlib.sha256()
    for doc in sorted(docs, key=lambda d: d.doc_id):
        digest.update(doc.doc_id.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(doc.text.encode("utf-8"))
        digest.update(b"\x01")
    return digest.hexdigest()


@dataclass
class IndexBundle:
    dense: DenseIndex
    bm25: Bm25Index
    snippets: list[Snippet]
    fingerprint: str

    def snippet_texts(self) -> dict[str, str]:
        return {sn.snippet_id: sn.text for sn in self.snippets}

    def snippet_docs(self) -> dict[str, str]:
        return {sn.snippet_id: sn.doc_id for sn in self.snippets}


def write_index(directory: str | Path, bundle: IndexBundle) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dense = bundle.dense
    np.ascontiguousarray(dense.matrix, dtype="<f4").tofile(directory / "vectors.f32")
    (directory / "snippet_ids.json").write_text(
        json.dumps(dense.snippet_ids), encoding="utf-8"
    )
    with open(directory / "snippets.jsonl", "w", encoding="utf-8") as handle:
        for sn in bundle.snippets:
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
    if dense.mode == "approximate":
        (directory / "graph.json").write_text(json.dumps(dense.neighbors), encoding="utf-8")
    with open(directory / "bm25_postings.jsonl", "w", encoding="utf-8") as handle:
        for term, plist in bundle.bm25.postings.items():
            handle.write(
                json.dumps({"t": term, "p": [[d, tf] for d, tf in plist]}, ensure_ascii=False)
                + "\n"
            )
    (directory / "doc_lengths.json").write_text(
        json.dumps(bundle.bm25.doc_lengths), encoding="utf-8"
    )
    manifest = {
        "format_version": FORMAT_VERSION,
        "dimension": dense.dimension,
        "count": len(dense),
        "mode": dense.mode,
        "degree": dense.degree,
        "construction_beam": dense.construction_beam,
        "search_beam": dense.search_beam,
        "corpus_fingerprint": bundle.fingerprint,
        "vector_dtype": "<f4",
        "files": {
            "vectors": "vectors.f32",
            "snippet_ids": "snippet_ids.json",
            "snippets": "snippets.jsonl",
            "graph": "graph.json" if dense.mode == "approximate" else None,
            "bm25_postings": "bm25_postings.jsonl",
            "doc_lengths": "doc_lengths.json",
        },
        "bm25": {
            "k1": bundle.bm25.k1,
            "b": bundle.bm25.b,
            "doc_count": bundle.bm25.doc_count,
            "avg_doc_length": bundle.bm25.avg_doc_length,
        },
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )


def read_index(directory: str | Path) -> IndexBundle:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise IndexStoreError(f"no manifest.json in {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise IndexStoreError(
            f"unsupported index format version {manifest.get('format_version')}"
        )
    files = manifest["files"]
    dim = int(manifest["dimension"])
    count = int(manifest["count"])
    raw = np.fromfile(directory / files["vectors"], dtype="<f4")
    if raw.size != dim * count:
        raise IndexStoreError(
            f"vector file holds {raw.size} floats, manifest says {count}x{dim}"
        )
    matrix = raw.reshape(count, dim)
    snippet_ids = json.loads((directory / files["snippet_ids"]).read_text(encoding="utf-8"))
    dense = DenseIndex(
        snippet_ids=snippet_ids,
        matrix=matrix,
        mode=manifest["mode"],
        degree=int(manifest["degree"]),
        construction_beam=int(manifest["construction_beam"]),
        search_beam=int(manifest["search_beam"]),
    )
    if manifest["mode"] == "approximate":
        dense.neighbors = [
            list(map(int, row))
            for row in json.loads((directory / files["graph"]).read_text(encoding="utf-8"))
        ]
    snippets = []
    for line in (directory / files["snippets"]).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        snippets.append(
            Snippet(
                snippet_id=record["snippet_id"],
                doc_id=record["doc_id"],
                word_start=int(record["word_start"]),
                word_end=int(record["word_end"]),
                text=record["text"],
            )
        )
    postings: dict[str, list[tuple[str, int]]] = {}
    for line in (directory / files["bm25_postings"]).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        postings[record["t"]] = [(doc_id, int(tf)) for doc_id, tf in record["p"]]
    doc_lengths = {
        doc_id: int(length)
        for doc_id, length in json.loads(
            (directory / files["doc_lengths"]).read_text(encoding="utf-8")
        ).items()
    }
    bm25 = Bm25Index(
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=float(manifest["bm25"]["avg_doc_length"]),
        doc_count=int(manifest["bm25"]["doc_count"]),
        k1=float(manifest["bm25"]["k1"]),
        b=float(manifest["bm25"]["b"]),
    )
    return IndexBundle(
        dense=dense,
        bm25=bm25,
        snippets=snippets,
        fingerprint=manifest["corpus_fingerprint"],
    )
