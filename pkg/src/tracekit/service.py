"""REST/JSON surface over the annotation store, consumed by the browser
workbench. Bodies mirror the JSONL schemas one-to-one. The single-page app is
served statically from the same process when a build directory is supplied."""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from . import categories as cat
from .annotation import (
    AnnotationError,
    AnnotationStore,
    DuplicateExemplar,
    Exemplar,
    ExpertAnnotation,
    TwoAfcVote,
    UnknownCategory,
    UnknownImage,
    VoteConflict,
)


class AnnotationBody(BaseModel):
    image_id: str
    annotator_id: str
    verdict: str
    categories: list[str] = Field(min_length=1)
    notes: str | None = None
    timestamp: str | None = None


class ExemplarBody(BaseModel):
    image_id: str
    polarity: str
    reasoning_text: str
    covered: list[str] = Field(min_length=1)
    exemplar_id: str | None = None


class VoteBody(BaseModel):
    rater_id: str
    item_id: str
    choice: str


def create_app(store: AnnotationStore, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="annotation service")

    @app.get("/categories")
    def categories() -> dict:
        return {"categories": list(cat.palette())}

    @app.get("/queue")
    def queue(annotator: str = Query(...)) -> dict:
        items = [{"image_id": r.id, "path": r.path} for r in store.queue_for(annotator)]
        return {"annotator": annotator, "items": items}

    @app.post("/annotations")
    def post_annotation(body: AnnotationBody) -> dict:
        try:
            ann = ExpertAnnotation(
                image_id=body.image_id, annotator_id=body.annotator_id,
                verdict=body.verdict, categories=frozenset(body.categories),
                notes=body.notes, timestamp=body.timestamp)
            return store.submit_annotation(ann)
        except UnknownCategory as exc:
            raise HTTPException(422, detail={"error": "unknown_category", "token": exc.token})
        except UnknownImage as exc:
            raise HTTPException(404, detail={"error": "unknown_image", "message": str(exc)})
        except AnnotationError as exc:
            raise HTTPException(422, detail={"error": "invalid_annotation", "message": str(exc)})

    @app.get("/merged/{image_id}")
    def merged(image_id: str) -> dict:
        try:
            m = store.merge_dual(image_id)
        except AnnotationError as exc:
            raise HTTPException(409, detail={"error": "protocol", "message": str(exc)})
        return {"image_id": m.image_id, "categories": cat.canonical_order(m.categories),
                "status": m.status}

    @app.post("/exemplars")
    def post_exemplar(body: ExemplarBody) -> dict:
        try:
            exemplar = Exemplar(
                exemplar_id=body.exemplar_id or store.registry.next_id(),
                image_id=body.image_id, polarity=body.polarity,
                reasoning_text=body.reasoning_text, covered=frozenset(body.covered))
            return {"exemplar_id": store.register_exemplar(exemplar),
                    "balance": store.registry.balance()}
        except DuplicateExemplar as exc:
            raise HTTPException(409, detail={"error": "duplicate_exemplar", "message": str(exc)})
        except UnknownCategory as exc:
            raise HTTPException(422, detail={"error": "unknown_category", "token": exc.token})
        except AnnotationError as exc:
            raise HTTPException(422, detail={"error": "invalid_exemplar", "message": str(exc)})

    @app.get("/coverage")
    def coverage() -> dict:
        report = store.validate_coverage()
        return {
            "per_category_counts": report.per_category_counts,
            "violations": report.violations,
            "has_positive": report.has_positive,
            "has_negative": report.has_negative,
            "balance": store.registry.balance(),
        }

    @app.post("/2afc/votes")
    def post_vote(body: VoteBody) -> dict:
        try:
            return store.cast_vote(TwoAfcVote(rater_id=body.rater_id, item_id=body.item_id,
                                              choice=body.choice))
        except VoteConflict as exc:
            raise HTTPException(409, detail={"error": "vote_conflict", "message": str(exc)})
        except AnnotationError as exc:
            raise HTTPException(422, detail={"error": "invalid_vote", "message": str(exc)})

    @app.get("/2afc/tally")
    def tally(preferred: str = Query("A")) -> dict:
        try:
            result = store.tally(preferred)
        except AnnotationError as exc:
            raise HTTPException(422, detail={"error": "invalid_tally", "message": str(exc)})
        return {"preferred": result.preferred, "rate": result.rate, "percent": result.percent,
                "n_votes": result.n_votes, "n_preferred": result.n_preferred}

    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
