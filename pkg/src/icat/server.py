"""HTTP surface over the annotation store.

    GET  /api/tasks/next?annotator=<id>   task JSON, or 204 when exhausted
    POST /api/annotations                 store a judgment set -> 201
    GET  /api/export/coverage             CSV (query_id, system_id, human_s_coverage)
    GET  /api/export/ratings              RatingMatrix JSON
    GET  /api/guidelines                  annotation guidelines + reference examples
    /                                     static UI bundle, when one is provided
"""

from __future__ import annotations

import io
import csv
import logging
from pathlib import Path

from fastapi import FastAPI, Query, Response
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .annotation import (
    AnnotationStore,
    AspectJudgment,
    Span,
    SubmissionError,
    make_annotation,
    task_to_dict,
)

logger = logging.getLogger(__name__)

GUIDELINES = {
    "instructions": (
        "For each aspect in the checklist, decide whether the response text "
        "actually gives information about it. Mark the aspect present only "
        "when you can highlight at least one passage of the response as "
        "evidence; highlight every passage that supports your decision. "
        "Mark the aspect absent when the response says nothing substantive "
        "about it, even if it mentions related words."
    ),
    "examples": [
        {
            "query": "is coffee good for health?",
            "aspect": "health risks of coffee",
            "response_excerpt": (
                "Heavy coffee consumption can raise blood pressure and disturb "
                "sleep in sensitive people."
            ),
            "decision": "present",
            "why": "The sentence describes concrete risks; highlight it as evidence.",
        },
        {
            "query": "is coffee good for health?",
            "aspect": "effects on cholesterol",
            "response_excerpt": "Coffee is one of the most popular drinks in the world.",
            "decision": "absent",
            "why": "Popularity says nothing about cholesterol; no evidence to highlight.",
        },
    ],
}

_ERROR_STATUS = {
    "unknown_task": 404,
    "duplicate_submission": 409,
    "judgment_mismatch": 422,
    "span_out_of_bounds": 422,
    "present_without_evidence": 422,
    "missing_annotator": 422,
}


class SpanBody(BaseModel):
    start: int
    end: int


class JudgmentBody(BaseModel):
    present: bool
    evidence: list[SpanBody] = Field(default_factory=list)


class AnnotationBody(BaseModel):
    task_id: str
    annotator_id: str
    judgments: dict[str, JudgmentBody]


def create_app(store: AnnotationStore, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="annotation service")

    @app.get("/api/tasks/next")
    def next_task(annotator: str = Query(..., min_length=1)):
        task = store.next_task(annotator)
        if task is None:
            return Response(status_code=204)
        return JSONResponse(task_to_dict(task))

    @app.post("/api/annotations", status_code=201)
    def submit_annotation(body: AnnotationBody):
        annotation = make_annotation(
            task_id=body.task_id,
            annotator_id=body.annotator_id,
            judgments={
                aspect_id: AspectJudgment(
                    present=j.present,
                    evidence=tuple(Span(s.start, s.end) for s in j.evidence),
                )
                for aspect_id, j in body.judgments.items()
            },
        )
        try:
            status = store.submit(annotation)
        except SubmissionError as exc:
            return JSONResponse(
                {"error_code": exc.code, "detail": exc.detail},
                status_code=_ERROR_STATUS.get(exc.code, 400),
            )
        return {"status": status, "task_id": body.task_id}

    @app.get("/api/export/coverage")
    def export_coverage():
        rows, meta = store.export_human_coverage()
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(["query_id", "system_id", "human_s_coverage"])
        for row in rows:
            writer.writerow([row.query_id, row.system_id, repr(row.human_s_coverage)])
        response = PlainTextResponse(buffer.getvalue(), media_type="text/csv")
        response.headers["X-Partial-Tasks"] = str(len(meta.partial_tasks))
        response.headers["X-Truncated-Tasks"] = str(len(meta.truncated_tasks))
        return response

    @app.get("/api/export/ratings")
    def export_ratings():
        matrix = store.export_rating_matrix()
        return {
            "items": list(matrix.items),
            "categories": list(matrix.categories),
            "counts": [list(row) for row in matrix.counts],
            "raters_per_item": matrix.raters_per_item,
        }

    @app.get("/api/guidelines")
    def guidelines():
        return GUIDELINES

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
