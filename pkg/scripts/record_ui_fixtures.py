"""Record REST fixtures for the frontend contract suite.

Drives the live annotation service in-process and writes request/response
pairs under frontend/tests/fixtures/. Deterministic: fixed corpus, fixed
timestamps, no wall-clock anywhere.

    python3 scripts/record_ui_fixtures.py
"""

from __future__ import annotations

import hashlib
import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from tracekit.annotation import AnnotationStore
from tracekit.corpus import Corpus, CorpusManifest, ManifestEntry
from tracekit.service import create_app

FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"


def digest(tag: str) -> str:
    return hashlib.sha256(tag.encode()).hexdigest()


def build_client() -> TestClient:
    work = Path(tempfile.mkdtemp(prefix="fixture-rec-"))
    corpus = Corpus(work / "corpus")
    corpus.ingest(CorpusManifest(entries=[
        ManifestEntry(path="uri://fixture/fake_0.png", auth="fake", generator="gen-a",
                      source="fixture", hash=digest("fixture-fake-0")),
        ManifestEntry(path="uri://fixture/real_0.png", auth="real", source="fixture",
                      hash=digest("fixture-real-0")),
    ]))
    return TestClient(create_app(AnnotationStore(corpus)))


def record(name: str, method: str, path: str, body, response) -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    doc = {
        "request": {"method": method, "path": path, "body": body},
        "response": {"status": response.status_code, "body": response.json()},
    }
    (FIXTURES / f"{name}.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"recorded {name}: {method} {path} -> {response.status_code}")


def main() -> None:
    api = build_client()
    fake_id = "img-" + digest("fixture-fake-0")[:12]

    resp = api.get("/categories")
    record("categories_get", "GET", "/categories", None, resp)

    resp = api.get("/queue", params={"annotator": "expert-1"})
    record("queue_get", "GET", "/queue?annotator=expert-1", None, resp)

    annotation = {
        "image_id": fake_id,
        "annotator_id": "expert-1",
        "verdict": "fake",
        "categories": ["texture", "edge", "anatomy"],
        "notes": "fingers merge near the cup handle",
        "timestamp": "2026-01-01T00:00:00Z",
    }
    resp = api.post("/annotations", json=annotation)
    record("annotation_post", "POST", "/annotations", annotation, resp)

    exemplar = {
        "image_id": "uri://fixture/exemplar_0.png",
        "polarity": "positive",
        "reasoning_text": "The texture grain repeats in tiles and the edge of the jaw smears.",
        "covered": ["texture", "edge"],
    }
    resp = api.post("/exemplars", json=exemplar)
    record("exemplar_post", "POST", "/exemplars", exemplar, resp)

    resp = api.get("/coverage")
    record("coverage_get", "GET", "/coverage", None, resp)

    vote = {"rater_id": "rater-1", "item_id": "pair-0001", "choice": "A"}
    resp = api.post("/2afc/votes", json=vote)
    record("vote_post", "POST", "/2afc/votes", vote, resp)

    resp = api.post("/2afc/votes", json=vote)  # idempotent double submit
    record("vote_post_duplicate", "POST", "/2afc/votes", vote, resp)

    for i in range(1, 12):
        api.post("/2afc/votes", json={"rater_id": f"rater-{i}", "item_id": "pair-0001",
                                      "choice": "A" if i <= 10 else "B"})
    resp = api.get("/2afc/tally", params={"preferred": "A"})
    record("tally_get", "GET", "/2afc/tally?preferred=A", None, resp)

    # a fresh session holding a 600-vote study, 595 preferring A
    big = build_client()
    for i in range(600):
        big.post("/2afc/votes", json={"rater_id": f"rater-{i % 6}", "item_id": f"pair-{i:04d}",
                                      "choice": "A" if i < 595 else "B"})
    resp = big.get("/2afc/tally", params={"preferred": "A"})
    record("tally_600_get", "GET", "/2afc/tally?preferred=A", None, resp)


if __name__ == "__main__":
    main()
