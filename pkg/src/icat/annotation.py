"""Annotation task pool and judgment store for the human-validation study.

Persistence is an append-only JSON Lines event log (task events, then
annotation events); all state is rebuilt by replaying the log, which makes
the store crash-safe, diffable, and trivially exportable. Evidence spans
are code-point offsets into the exact stored response text.

Assignment policy: every task wants `required_annotators` distinct
annotators; next_task hands out the least-covered task the annotator has
not already done. Concurrent annotators can transiently over-assign one
task; excess submissions are accepted but majority voting uses only the
first `required_annotators` by (timestamp, arrival order), and exports
flag when that truncation happened.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .aspects import Aspect, AspectSet
from .responses import ResponseRecord
from .stats import RatingMatrix, majority_vote

logger = logging.getLogger(__name__)

DEFAULT_REQUIRED_ANNOTATORS = 3


class AnnotationError(ValueError):
    pass


class SubmissionError(AnnotationError):
    """Rejected submission; `code` is the machine-readable reason."""

    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code
        self.detail = detail


@dataclass(frozen=True)
class Span:
    start: int  # code points, inclusive
    end: int  # code points, exclusive


@dataclass(frozen=True)
class AspectJudgment:
    present: bool
    evidence: tuple[Span, ...] = ()


@dataclass(frozen=True)
class Annotation:
    task_id: str
    annotator_id: str
    judgments: dict[str, AspectJudgment]
    submitted_at: float


@dataclass(frozen=True)
class AnnotationTask:
    task_id: str
    query_id: str
    system_id: str
    query_text: str
    response_text: str
    aspects: AspectSet
    required_annotators: int = DEFAULT_REQUIRED_ANNOTATORS


def task_id_for(query_id: str, system_id: str) -> str:
    """Deterministic task id: stable across reruns of task creation."""
    return hashlib.sha256(f"{query_id}|{system_id}".encode("utf-8")).hexdigest()[:16]


def create_tasks(
    responses: list[ResponseRecord],
    aspects_by_query: dict[str, AspectSet],
    query_texts: dict[str, str],
    required_annotators: int = DEFAULT_REQUIRED_ANNOTATORS,
) -> list[AnnotationTask]:
    """One task per (query, system) response."""
    tasks: list[AnnotationTask] = []
    seen: set[tuple[str, str]] = set()
    for record in responses:
        key = (record.query_id, record.system_id)
        if key in seen:
            raise AnnotationError(f"duplicate response record for {key}")
        seen.add(key)
        if record.query_id not in aspects_by_query:
            raise AnnotationError(f"no aspects resolvable for query {record.query_id!r}")
        tasks.append(
            AnnotationTask(
                task_id=task_id_for(record.query_id, record.system_id),
                query_id=record.query_id,
                system_id=record.system_id,
                query_text=query_texts.get(record.query_id, record.query_id),
                response_text=record.text,
                aspects=aspects_by_query[record.query_id],
                required_annotators=required_annotators,
            )
        )
    return tasks


def task_to_dict(task: AnnotationTask) -> dict:
    return {
        "task_id": task.task_id,
        "query_id": task.query_id,
        "system_id": task.system_id,
        "query_text": task.query_text,
        "response_text": task.response_text,
        "required_annotators": task.required_annotators,
        "aspects": {
            "query_id": task.aspects.query_id,
            "provenance": task.aspects.provenance,
            "aspects": [
                {"id": a.aspect_id, "text": a.description} for a in task.aspects.aspects
            ],
        },
    }


def task_from_dict(data: dict) -> AnnotationTask:
    aspects = data["aspects"]
    return AnnotationTask(
        task_id=data["task_id"],
        query_id=data["query_id"],
        system_id=data["system_id"],
        query_text=data["query_text"],
        response_text=data["response_text"],
        required_annotators=int(data.get("required_annotators", DEFAULT_REQUIRED_ANNOTATORS)),
        aspects=AspectSet(
            query_id=aspects["query_id"],
            provenance=aspects["provenance"],
            aspects=tuple(
                Aspect(aspect_id=str(a["id"]), description=a["text"])
                for a in aspects["aspects"]
            ),
        ),
    )


def annotation_to_dict(annotation: Annotation) -> dict:
    return {
        "task_id": annotation.task_id,
        "annotator_id": annotation.annotator_id,
        "submitted_at": annotation.submitted_at,
        "judgments": {
            aspect_id: {
                "present": judgment.present,
                "evidence": [[span.start, span.end] for span in judgment.evidence],
            }
            for aspect_id, judgment in annotation.judgments.items()
        },
    }


def annotation_from_dict(data: dict) -> Annotation:
    return Annotation(
        task_id=data["task_id"],
        annotator_id=data["annotator_id"],
        submitted_at=float(data["submitted_at"]),
        judgments={
            str(aspect_id): AspectJudgment(
                present=bool(j["present"]),
                evidence=tuple(Span(int(s), int(e)) for s, e in j.get("evidence", [])),
            )
            for aspect_id, j in data["judgments"].items()
        },
    )


@dataclass(frozen=True)
class HumanCoverageRow:
    query_id: str
    system_id: str
    human_s_coverage: float


@dataclass
class ExportMeta:
    complete_tasks: int = 0
    partial_tasks: list[str] = field(default_factory=list)
    truncated_tasks: list[str] = field(default_factory=list)


class AnnotationStore:
    """Replayable event-log store; submissions serialize through one writer lock."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._tasks: dict[str, AnnotationTask] = {}
        # task_id -> list of (seq, Annotation) in arrival order
        self._annotations: dict[str, list[tuple[int, Annotation]]] = {}
        self._seq = 0
        if self.path is not None and self.path.exists():
            self._replay()

    # -- persistence --

    def _replay(self) -> None:
        for lineno, line in enumerate(
            self.path.read_text(encoding="utf-8").splitlines(), start=1
        ):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"{self.path}:{lineno}: corrupt event: {exc}") from exc
            kind = event.get("type")
            if kind == "task":
                task = task_from_dict(event["task"])
                self._tasks[task.task_id] = task
            elif kind == "annotation":
                annotation = annotation_from_dict(event["annotation"])
                seq = int(event.get("seq", self._seq + 1))
                self._seq = max(self._seq, seq)
                self._annotations.setdefault(annotation.task_id, []).append((seq, annotation))
            else:
                raise AnnotationError(f"{self.path}:{lineno}: unknown event type {kind!r}")

    def _append(self, event: dict) -> None:
        if self.path is None:
            return
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(event, ensure_ascii=False) + "\n")
            handle.flush()

    # -- tasks --

    def add_tasks(self, tasks: list[AnnotationTask]) -> int:
        """Idempotent task registration; returns how many were new."""
        added = 0
        with self._lock:
            for task in tasks:
                existing = self._tasks.get(task.task_id)
                if existing is not None:
                    if existing != task:
                        raise AnnotationError(
                            f"task {task.task_id} already registered with different content"
                        )
                    continue
                self._tasks[task.task_id] = task
                self._append({"type": "task", "task": task_to_dict(task)})
                added += 1
        return added

    def get_task(self, task_id: str) -> AnnotationTask | None:
        return self._tasks.get(task_id)

    def tasks(self) -> list[AnnotationTask]:
        return list(self._tasks.values())

    def annotations_for(self, task_id: str) -> list[Annotation]:
        return [annotation for _, annotation in self._annotations.get(task_id, [])]

    def completed_by(self, task_id: str) -> list[str]:
        """The first required_annotators annotator ids by (timestamp, arrival)."""
        task = self._tasks[task_id]
        ordered = sorted(
            self._annotations.get(task_id, []), key=lambda item: (item[1].submitted_at, item[0])
        )
        return [annotation.annotator_id for _, annotation in ordered[: task.required_annotators]]

    def next_task(self, annotator_id: str) -> AnnotationTask | None:
        """Least-covered incomplete task this annotator has not yet done."""
        if not annotator_id:
            raise AnnotationError("annotator_id must be non-empty")
        candidates: list[tuple[int, str]] = []
        with self._lock:
            for task in self._tasks.values():
                submissions = self._annotations.get(task.task_id, [])
                done_by = {a.annotator_id for _, a in submissions}
                completed = min(len(submissions), task.required_annotators)
                if completed >= task.required_annotators:
                    continue
                if annotator_id in done_by:
                    continue
                candidates.append((completed, task.task_id))
        if not candidates:
            return None
        candidates.sort()
        return self._tasks[candidates[0][1]]

    # -- submissions --

    def submit(self, annotation: Annotation) -> str:
        """Validate and append; returns "stored" or "duplicate" (exact resubmission)."""
        task = self._tasks.get(annotation.task_id)
        if task is None:
            raise SubmissionError("unknown_task", f"no such task {annotation.task_id!r}")
        if not annotation.annotator_id:
            raise SubmissionError("missing_annotator", "annotator_id must be non-empty")
        self._validate_judgments(task, annotation)
        with self._lock:
            for _, existing in self._annotations.get(annotation.task_id, []):
                if existing.annotator_id == annotation.annotator_id:
                    if existing.judgments == annotation.judgments:
                        return "duplicate"
                    raise SubmissionError(
                        "duplicate_submission",
                        f"annotator {annotation.annotator_id!r} already submitted "
                        f"different judgments for task {annotation.task_id}",
                    )
            self._seq += 1
            self._annotations.setdefault(annotation.task_id, []).append(
                (self._seq, annotation)
            )
            self._append(
                {
                    "type": "annotation",
                    "seq": self._seq,
                    "annotation": annotation_to_dict(annotation),
                }
            )
        return "stored"

    @staticmethod
    def _validate_judgments(task: AnnotationTask, annotation: Annotation) -> None:
        expected = {a.aspect_id for a in task.aspects.aspects}
        got = set(annotation.judgments)
        if got != expected:
            raise SubmissionError(
                "judgment_mismatch",
                f"judgments must cover exactly the task aspects {sorted(expected)}, "
                f"got {sorted(got)}",
            )
        limit = len(task.response_text)  # python str length == code points
        for aspect_id, judgment in annotation.judgments.items():
            for span in judgment.evidence:
                if not (0 <= span.start < span.end <= limit):
                    raise SubmissionError(
                        "span_out_of_bounds",
                        f"aspect {aspect_id}: span [{span.start}, {span.end}) outside "
                        f"response of length {limit}",
                    )
            if judgment.present and not judgment.evidence:
                raise SubmissionError(
                    "present_without_evidence",
                    f"aspect {aspect_id} marked present without an evidence span",
                )

    # -- exports --

    def _complete_tasks(self) -> list[AnnotationTask]:
        return [
            task
            for task in self._tasks.values()
            if len(self._annotations.get(task.task_id, [])) >= task.required_annotators
        ]

    def export_human_coverage(self) -> tuple[list[HumanCoverageRow], ExportMeta]:
        """Majority-voted per-task human coverage over complete tasks."""
        meta = ExportMeta()
        complete = sorted(self._complete_tasks(), key=lambda t: t.task_id)
        all_ids = set(self._tasks)
        complete_ids = {t.task_id for t in complete}
        meta.partial_tasks = sorted(all_ids - complete_ids)
        for task_id in meta.partial_tasks:
            logger.warning("task %s has too few annotations; excluded from export", task_id)
        if not complete:
            raise AnnotationError("no complete tasks to export")
        meta.complete_tasks = len(complete)
        rows: list[HumanCoverageRow] = []
        for task in complete:
            kept = self._kept_annotations(task, meta)
            votes = [
                [1 if annotation.judgments[a.aspect_id].present else 0 for annotation in kept]
                for a in task.aspects.aspects
            ]
            covered = sum(majority_vote(votes))
            rows.append(
                HumanCoverageRow(
                    query_id=task.query_id,
                    system_id=task.system_id,
                    human_s_coverage=covered / len(task.aspects.aspects),
                )
            )
        return rows, meta

    def _kept_annotations(self, task: AnnotationTask, meta: ExportMeta) -> list[Annotation]:
        ordered = sorted(
            self._annotations[task.task_id], key=lambda item: (item[1].submitted_at, item[0])
        )
        if len(ordered) > task.required_annotators and task.task_id not in meta.truncated_tasks:
            meta.truncated_tasks.append(task.task_id)
        return [annotation for _, annotation in ordered[: task.required_annotators]]

    def export_rating_matrix(self) -> RatingMatrix:
        """items = (task x aspect), categories = (present, absent)."""
        complete = sorted(self._complete_tasks(), key=lambda t: t.task_id)
        if not complete:
            raise AnnotationError("no complete tasks to export")
        required = {task.required_annotators for task in complete}
        if len(required) != 1:
            raise AnnotationError("tasks disagree on required_annotators; cannot build matrix")
        n = required.pop()
        meta = ExportMeta()
        items: list[str] = []
        counts: list[tuple[int, ...]] = []
        for task in complete:
            kept = self._kept_annotations(task, meta)
            for aspect in task.aspects.aspects:
                present = sum(
                    1 for annotation in kept if annotation.judgments[aspect.aspect_id].present
                )
                items.append(f"{task.task_id}:{aspect.aspect_id}")
                counts.append((present, n - present))
        return RatingMatrix(
            items=tuple(items),
            categories=("present", "absent"),
            counts=tuple(counts),
            raters_per_item=n,
        )


def make_annotation(
    task_id: str,
    annotator_id: str,
    judgments: dict[str, AspectJudgment],
    submitted_at: float | None = None,
) -> Annotation:
    return Annotation(
        task_id=task_id,
        annotator_id=annotator_id,
        judgments=judgments,
        submitted_at=time.time() if submitted_at is None else submitted_at,
    )
