"""Guided reasoning generation: exemplar selection, prompt assembly, response
validation, and reasoning-dataset emission.

The pipeline steers the model with the merged trace-evidence categories,
demonstrates with a minimum covering exemplar set (one of each polarity
guaranteed), and prompts for a structured reasoning passage that must mention
every steering category and end in a conclusion matching the known label.
Responses are validated lexically; failures retry with a corrective message up
to a bounded attempt count, then the item is parked in a rejects file.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import categories as cat
from .annotation import AnnotationStore, ExemplarRegistry, MERGE_ACCEPTED, MergedAnnotation
from .corpus import Corpus
from .gateway import ChatMessage, ChatRequest, Gateway, GatewayError, TransportError
from .setcover import CoverError, minimum_cover
from .softscore import parse_polarity

COT_TEMPLATE_ID = "cot_v1"
DEFAULT_MAX_ATTEMPTS = 3

FAKECHAIN_FIELDS = ("image_id", "auth", "rsn", "steering", "exemplar_ids", "model", "attempts")


class ReasoningError(Exception):
    pass


class ReasoningRejected(ReasoningError):
    """Every attempt failed validation (or transport gave out); item parked."""

    def __init__(self, image_id: str, violations: list[str], attempts: int):
        self.image_id = image_id
        self.violations = violations
        self.attempts = attempts
        super().__init__(f"{image_id}: {violations} after {attempts} attempts")


@dataclass(frozen=True)
class ExemplarSelection:
    exemplar_ids: tuple[str, ...]
    covered: frozenset
    has_positive: bool
    has_negative: bool

    @property
    def cardinality(self) -> int:
        return len(self.exemplar_ids)


@dataclass(frozen=True)
class PromptBundle:
    context: tuple[dict, ...]   # exemplar blocks, positives then negatives
    target: str                 # target image ref
    supervisions: dict          # categories, exemplar_ids, auth, notes
    cot_prompt: str = COT_TEMPLATE_ID

    def canonical_json(self) -> str:
        return json.dumps(
            {"context": list(self.context), "target": self.target,
             "supervisions": self.supervisions, "cot_prompt": self.cot_prompt},
            sort_keys=True, ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True)
class ReasoningRecord:
    image_id: str
    auth: str
    rsn: str
    steering: tuple[str, ...]
    exemplar_ids: tuple[str, ...]
    model_tag: str
    attempt_count: int

    def to_json(self) -> str:
        return json.dumps(
            {"image_id": self.image_id, "auth": self.auth, "rsn": self.rsn,
             "steering": list(self.steering), "exemplar_ids": list(self.exemplar_ids),
             "model": self.model_tag, "attempts": self.attempt_count},
            ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ReasoningRecord":
        return cls(image_id=d["image_id"], auth=d["auth"], rsn=d["rsn"],
                   steering=tuple(d["steering"]), exemplar_ids=tuple(d["exemplar_ids"]),
                   model_tag=d["model"], attempt_count=d["attempts"])


def load_cot_template() -> str:
    return resources.files("tracekit.data").joinpath(f"templates/{COT_TEMPLATE_ID}.txt").read_text("utf-8")


def select_exemplars(target_categories, registry: ExemplarRegistry) -> ExemplarSelection:
    """Exact minimum covering exemplar subset with both polarities present."""
    solution = minimum_cover(target_categories, registry.cover_candidates())
    return ExemplarSelection(
        exemplar_ids=solution.ids, covered=solution.covered,
        has_positive=solution.has_positive, has_negative=solution.has_negative)


def assemble_prompt(image_ref: str, merged: MergedAnnotation, selection: ExemplarSelection,
                    registry: ExemplarRegistry, auth: str, notes: str = "") -> PromptBundle:
    """Build the four-slot prompt bundle: demonstrations, target, human
    supervisions (steering categories, exemplar ids, label, verbatim notes),
    and the CoT template id."""
    if merged.status != MERGE_ACCEPTED:
        raise ReasoningError(f"cannot assemble a prompt from a {merged.status} annotation")
    exemplars = [registry.get(eid) for eid in selection.exemplar_ids]
    if any(e is None for e in exemplars):
        raise ReasoningError("selection references exemplars missing from the registry")
    ordered = sorted(exemplars, key=lambda e: (e.polarity != "positive", e.exemplar_id))
    context = tuple(
        {"exemplar_id": e.exemplar_id, "image_ref": e.image_id, "polarity": e.polarity,
         "reasoning": e.reasoning_text}
        for e in ordered)
    supervisions = {
        "categories": cat.canonical_order(merged.categories),
        "exemplar_ids": sorted(selection.exemplar_ids),
        "auth": auth,
        "notes": notes or "",
    }
    return PromptBundle(context=context, target=image_ref, supervisions=supervisions)


def render_request(bundle: PromptBundle) -> ChatRequest:
    """Deterministic chat request for a bundle (greedy decoding)."""
    blocks = []
    for block in bundle.context:
        tag = "AI-generated" if block["polarity"] == "positive" else "genuine"
        blocks.append(f"[exemplar {block['exemplar_id']} | image {block['image_ref']} | {tag}]\n"
                      f"{block['reasoning']}")
    sup = bundle.supervisions
    lines = [
        "== Demonstrations ==",
        "\n\n".join(blocks),
        "== Target ==",
        f"Image: {bundle.target}",
        "== Human supervisions ==",
        f"Steering categories: {', '.join(sup['categories'])}",
        f"Authenticity label: {sup['auth']}",
        f"Exemplars: {', '.join(sup['exemplar_ids'])}",
    ]
    if sup["notes"]:
        lines.append(f"Notes: {sup['notes']}")
    image_refs = tuple(b["image_ref"] for b in bundle.context) + (bundle.target,)
    return ChatRequest(
        messages=(ChatMessage("system", load_cot_template()),
                  ChatMessage("user", "\n".join(lines))),
        image_refs=image_refs)


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violations: tuple[str, ...]


def validate_reasoning(rsn: str, auth: str, steering) -> ValidationResult:
    """Lexical gate: (a) the final polarity-bearing sentence matches `auth`;
    (b) every steering category is evidenced somewhere in the body."""
    if not rsn.strip():
        raise ReasoningError("reasoning text is empty")
    violations = []
    sentences = [s for s in re.split(r"(?<=[.!?])\s+", rsn) if s.strip()]
    conclusion = None
    for sentence in reversed(sentences):
        polarity, _ = parse_polarity(sentence)
        if polarity is not None:
            conclusion = polarity
            break
    if conclusion is None:
        violations.append("conclusion_missing")
    elif conclusion != auth:
        violations.append(f"conclusion_mismatch:expected={auth},found={conclusion}")
    for c in cat.uncovered_categories(rsn, steering):
        violations.append(f"category_uncovered:{c}")
    return ValidationResult(ok=not violations, violations=tuple(violations))


CORRECTIVE_TEMPLATE = (
    "Your previous answer was rejected for: {violations}. Rewrite the full reasoning passage. "
    "Cover every steering category explicitly and end with one conclusion sentence matching "
    "the provided authenticity label.")


def run_reasoning(bundle: PromptBundle, gateway: Gateway,
                  max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> ReasoningRecord:
    """First response passing validation wins; each retry carries the prior
    violations as a corrective turn. Transport failures (post gateway backoff)
    park the item like persistent validation failures."""
    sup = bundle.supervisions
    request = render_request(bundle)
    violations: tuple[str, ...] = ()
    for attempt in range(1, max_attempts + 1):
        try:
            reply = gateway.chat(request).text
        except TransportError as exc:
            raise ReasoningRejected(bundle.target, [f"transport:{exc}"], attempt)
        result = validate_reasoning(reply, sup["auth"], sup["categories"])
        if result.ok:
            return ReasoningRecord(
                image_id=bundle.target, auth=sup["auth"], rsn=reply,
                steering=tuple(sup["categories"]),
                exemplar_ids=tuple(sup["exemplar_ids"]),
                model_tag=gateway.model_tag, attempt_count=attempt)
        violations = result.violations
        correction = CORRECTIVE_TEMPLATE.format(violations="; ".join(violations))
        request = ChatRequest(
            messages=request.messages + (ChatMessage("assistant", reply),
                                         ChatMessage("user", correction)),
            image_refs=request.image_refs)
    raise ReasoningRejected(bundle.target, list(violations), max_attempts)


def build_fakechain(corpus: Corpus, store: AnnotationStore, gateway: Gateway,
                    out_path: str | Path, max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                    concurrency: int = 1) -> dict:
    """One reasoning record per accepted merged annotation, streamed to JSONL.

    Bundles are prepared sequentially, gateway calls run with at most
    `concurrency` in flight, and emission goes through a single ordered
    writer, so output bytes do not depend on the worker count. Items whose
    generation fails land in `<out>.rejects.jsonl` with their last violations;
    the batch always completes.
    """
    out_path = Path(out_path)
    rejects_path = out_path.with_suffix(out_path.suffix + ".rejects.jsonl")
    registry = store.registry
    counts = {"fake": 0, "real": 0}
    skipped = 0
    rejects = []
    prepared: list[tuple] = []  # (record, bundle)
    for record in corpus.records():
        if len(store.annotations_for(record.id)) != 2:
            skipped += 1
            continue
        merged = store.merge_dual(record.id)
        if merged.status != MERGE_ACCEPTED:
            skipped += 1
            continue
        try:
            selection = select_exemplars(merged.categories, registry)
            bundle = assemble_prompt(record.id, merged, selection, registry,
                                     auth=record.auth, notes=store.merged_notes(record.id))
        except (GatewayError, CoverError, ReasoningError) as exc:
            rejects.append({"image_id": record.id, "violations": [f"{type(exc).__name__}:{exc}"],
                            "attempts": 0})
            continue
        prepared.append((record, bundle))

    def generate(item):
        record, bundle = item
        try:
            return record, run_reasoning(bundle, gateway, max_attempts), None
        except ReasoningRejected as exc:
            return record, None, {"image_id": record.id, "violations": list(exc.violations),
                                  "attempts": exc.attempts}
        except GatewayError as exc:
            return record, None, {"image_id": record.id,
                                  "violations": [f"{type(exc).__name__}:{exc}"], "attempts": 0}

    if concurrency > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            results = list(pool.map(generate, prepared))
    else:
        results = [generate(item) for item in prepared]

    with open(out_path, "w", encoding="utf-8") as out:
        for record, rsn, reject in results:
            if reject is not None:
                rejects.append(reject)
                continue
            out.write(rsn.to_json() + "\n")
            counts[record.auth] += 1
    if rejects:
        rejects.sort(key=lambda r: r["image_id"])
        with open(rejects_path, "w", encoding="utf-8") as rej:
            for row in rejects:
                rej.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n")
    return {
        "n_records": counts["fake"] + counts["real"],
        "by_auth": counts,
        "n_rejected": len(rejects),
        "n_skipped_unmerged": skipped,
        "out": str(out_path),
        "rejects": str(rejects_path) if rejects else None,
    }


def load_fakechain(path: str | Path) -> list[ReasoningRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                records.append(ReasoningRecord.from_dict(json.loads(line)))
    return records
