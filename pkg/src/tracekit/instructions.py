"""Instruction forging: derive four instruction families from reasoning
records, screen out text-answerable items, and report balance statistics.

Part 1 implants the bare fake/real concept (answers are exactly those two
words), Part 2 carries the full reasoning as the answer, Part 3 rewrites the
reasoning into fine-grained VQA (narrative and MCQ, via two alternating
rewriter endpoints), and Part 4 extends into open discussion across four
aspects. Default per-record quotas {1, 2, 15, 25} reproduce the published
corpus part ratios; all quotas are configurable.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from string import Template

from .gateway import ChatMessage, ChatRequest, Gateway, GatewayError
from .reasoning import ReasoningRecord

PART_TAGS = ("P1_absolute", "P2_holistic", "P3_finegrained", "P4_extensional")
FORMATS = ("narrative", "mcq", "yes_no", "imperative")

DEFAULT_QUOTAS = {"p1": 1, "p2": 2, "p3": 15, "p4": 25}

PART3_CYCLE = (
    ("what", "narrative"),
    ("how", "narrative"),
    ("yes-or-no", "yes_no"),
    ("imperative", "imperative"),
    ("what", "mcq"),
)

PART4_ASPECTS = ("misjudgment_origins", "realism_improvements",
                 "generator_characteristics", "user_inquiries")

MCQ_OPTION_COUNT = 4
REWRITE_RETRIES = 2


class ForgeError(Exception):
    pass


@dataclass(frozen=True)
class InstructionRecord:
    id: str
    image_id: str
    part: str
    format: str
    question: str
    answer: str
    mcq_options: tuple[str, ...] | None = None
    correct_index: int | None = None
    rewriter_tag: str = "template:v1"
    aspect: str | None = None
    contaminated: bool = False

    def __post_init__(self):
        if self.part not in PART_TAGS:
            raise ForgeError(f"unknown part tag {self.part!r}")
        if self.format not in FORMATS:
            raise ForgeError(f"unknown format {self.format!r}")
        if not self.question.strip() or not self.answer.strip():
            raise ForgeError("question and answer must be non-empty")
        if self.part == "P1_absolute" and self.answer not in ("fake", "real"):
            raise ForgeError("part-1 answers must be exactly 'fake' or 'real'")
        if self.format == "mcq":
            if not self.mcq_options or self.correct_index is None:
                raise ForgeError("mcq items need options and a correct_index")
            if len(self.mcq_options) != len(set(self.mcq_options)):
                raise ForgeError("mcq options must be unique")
            if not 0 <= self.correct_index < len(self.mcq_options):
                raise ForgeError("correct_index out of range")
            if self.mcq_options[self.correct_index] != self.answer:
                raise ForgeError("answer must equal the correct option")
        elif self.mcq_options is not None or self.correct_index is not None:
            raise ForgeError("only mcq items carry options")

    def to_json(self) -> str:
        doc = {"id": self.id, "image_id": self.image_id, "part": self.part,
               "format": self.format, "question": self.question, "answer": self.answer}
        if self.mcq_options is not None:
            doc["options"] = list(self.mcq_options)
            doc["correct_index"] = self.correct_index
        doc["rewriter"] = self.rewriter_tag
        if self.aspect is not None:
            doc["aspect"] = self.aspect
        doc["contaminated"] = self.contaminated
        return json.dumps(doc, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "InstructionRecord":
        return cls(id=d["id"], image_id=d["image_id"], part=d["part"], format=d["format"],
                   question=d["question"], answer=d["answer"],
                   mcq_options=tuple(d["options"]) if "options" in d else None,
                   correct_index=d.get("correct_index"), rewriter_tag=d["rewriter"],
                   aspect=d.get("aspect"), contaminated=d["contaminated"])


def _template_list(name: str) -> list[str]:
    raw = resources.files("tracekit.data").joinpath(f"templates/{name}").read_text("utf-8")
    return json.loads(raw)


def _rotation_start(seed: int, image_id: str, part: str, pool: int) -> int:
    digest = hashlib.sha256(f"{seed}:{image_id}:{part}".encode("utf-8")).hexdigest()
    return int(digest[:8], 16) % pool


def gen_part1(record: ReasoningRecord, templates: list[str] | None = None,
              quota: int = 1, seed: int = 0) -> list[InstructionRecord]:
    """Absolute-judgment items; answers are the bare class words."""
    pool = templates if templates is not None else _template_list("part1_questions.json")
    if not pool:
        raise ForgeError("part-1 template pool is empty")
    start = _rotation_start(seed, record.image_id, "p1", len(pool))
    return [
        InstructionRecord(
            id=f"{record.image_id}:p1:{i:03d}", image_id=record.image_id,
            part="P1_absolute", format="narrative",
            question=pool[(start + i) % len(pool)], answer=record.auth)
        for i in range(quota)
    ]


def gen_part2(record: ReasoningRecord, templates: list[str] | None = None,
              quota: int = 2, seed: int = 0) -> list[InstructionRecord]:
    """Holistic items: the full reasoning passage is the answer, verbatim."""
    pool = templates if templates is not None else _template_list("part2_questions.json")
    if not pool:
        raise ForgeError("part-2 template pool is empty")
    if quota > len(pool):
        raise ForgeError(f"part-2 quota {quota} exceeds distinct templates ({len(pool)})")
    start = _rotation_start(seed, record.image_id, "p2", len(pool))
    return [
        InstructionRecord(
            id=f"{record.image_id}:p2:{i:03d}", image_id=record.image_id,
            part="P2_holistic", format="narrative",
            question=pool[(start + i) % len(pool)], answer=record.rsn)
        for i in range(quota)
    ]


def _rewrite_template() -> Template:
    raw = resources.files("tracekit.data").joinpath("templates/part3_rewrite_v1.txt").read_text("utf-8")
    return Template(raw)


def _request_rewrite(gateway: Gateway, qtype: str, fmt: str, variation: int,
                     rsn: str) -> dict:
    """One structured rewrite with bounded re-asks on malformed output."""
    prompt = _rewrite_template().substitute(qtype=qtype, fmt=fmt, variation=variation, rsn=rsn)
    messages = (ChatMessage("user", prompt),)
    for attempt in range(REWRITE_RETRIES + 1):
        reply = gateway.chat(ChatRequest(messages=messages)).text
        try:
            doc = json.loads(reply)
            if not isinstance(doc, dict):
                raise ValueError("not an object")
            return doc
        except ValueError:
            messages = messages + (
                ChatMessage("assistant", reply),
                ChatMessage("user", "That was not valid JSON. Reply with only the JSON object."))
    raise ForgeError(f"rewriter returned malformed output after {REWRITE_RETRIES + 1} tries")


def _mcq_from(doc: dict) -> tuple[tuple[str, ...], int, str]:
    options = tuple(str(o) for o in doc.get("options", ()))
    idx = doc.get("correct_index")
    if len(options) != MCQ_OPTION_COUNT or not isinstance(idx, int) or not 0 <= idx < len(options):
        raise ForgeError(f"bad mcq structure: {doc}")
    return options, idx, options[idx]


def gen_part3(record: ReasoningRecord, rewriters: tuple[Gateway, Gateway],
              quota: int = 15, seed: int = 0) -> tuple[list[InstructionRecord], list[dict]]:
    """Fine-grained VQA rewritten from the reasoning; question type and format
    cycle through what/how/yes-or-no/imperative plus an MCQ slot, and the two
    rewriter endpoints alternate item by item. Malformed rewrites are skipped
    and logged after retries."""
    items: list[InstructionRecord] = []
    skips: list[dict] = []
    for i in range(quota):
        qtype, fmt = PART3_CYCLE[i % len(PART3_CYCLE)]
        gateway = rewriters[i % 2]
        try:
            doc = _request_rewrite(gateway, qtype, fmt, variation=seed * 10000 + i, rsn=record.rsn)
            if fmt == "mcq":
                options, idx, answer = _mcq_from(doc)
                item = InstructionRecord(
                    id=f"{record.image_id}:p3:{i:03d}", image_id=record.image_id,
                    part="P3_finegrained", format="mcq",
                    question=str(doc["question"]), answer=answer,
                    mcq_options=options, correct_index=idx,
                    rewriter_tag=gateway.model_tag)
            else:
                item = InstructionRecord(
                    id=f"{record.image_id}:p3:{i:03d}", image_id=record.image_id,
                    part="P3_finegrained", format=fmt,
                    question=str(doc["question"]), answer=str(doc["answer"]),
                    rewriter_tag=gateway.model_tag)
            items.append(item)
        except (ForgeError, KeyError, GatewayError) as exc:
            skips.append({"id": f"{record.image_id}:p3:{i:03d}", "reason": str(exc)})
    return items, skips


def gen_part4(record: ReasoningRecord, rewriters: tuple[Gateway, Gateway],
              quota: int = 25, seed: int = 0) -> tuple[list[InstructionRecord], list[dict]]:
    """Extensional discussion items, round-robin across the four aspects."""
    directives = json.loads(
        resources.files("tracekit.data").joinpath("templates/part4_aspects.json").read_text("utf-8"))
    items: list[InstructionRecord] = []
    skips: list[dict] = []
    for i in range(quota):
        aspect = PART4_ASPECTS[i % len(PART4_ASPECTS)]
        gateway = rewriters[i % 2]
        try:
            doc = _request_rewrite(
                gateway, qtype=f"extensional:{aspect}", fmt="narrative",
                variation=seed * 10000 + i,
                rsn=f"{directives[aspect]}\n{record.rsn}")
            item = InstructionRecord(
                id=f"{record.image_id}:p4:{i:03d}", image_id=record.image_id,
                part="P4_extensional", format="narrative",
                question=str(doc["question"]), answer=str(doc["answer"]),
                rewriter_tag=gateway.model_tag, aspect=aspect)
            items.append(item)
        except (ForgeError, KeyError, GatewayError) as exc:
            skips.append({"id": f"{record.image_id}:p4:{i:03d}", "reason": str(exc)})
    return items, skips


# --- decontamination ---

@dataclass
class DecontaminationResult:
    kept: list[InstructionRecord]
    dropped: list[InstructionRecord]
    undecided_ids: list[str] = field(default_factory=list)


def _probe_request(item: InstructionRecord, trial: int) -> ChatRequest:
    lines = [f"#task: probe", f"Trial: {trial}",
             "Answer the following question. No image is provided.",
             item.question]
    if item.format == "mcq":
        lines.append("Options:")
        lines += [f"{k}) {opt}" for k, opt in enumerate(item.mcq_options)]
        lines.append("Reply with 'ANSWER: <option number>'.")
    elif item.format == "yes_no":
        lines.append("Reply with yes or no.")
    return ChatRequest(messages=(ChatMessage("user", "\n".join(lines)),))


def _probe_correct(item: InstructionRecord, reply: str, equiv_gateway: Gateway) -> bool:
    if item.format == "mcq":
        m = re.search(r"(\d+)", reply)
        return m is not None and int(m.group(1)) == item.correct_index
    if item.format == "yes_no":
        reply_tok = reply.strip().lower()
        answer_yes = item.answer.strip().lower().startswith("yes")
        return reply_tok.startswith("yes") == answer_yes and ("yes" in reply_tok or "no" in reply_tok)
    prompt = (f"#task: equiv\nDo these two answers convey the same content? "
              f"Candidate: {reply}\nReference: {item.answer}\nAnswer yes or no.")
    verdict = equiv_gateway.chat(ChatRequest(messages=(ChatMessage("user", prompt),))).text
    return verdict.strip().lower().startswith("yes")


def chance_level(item: InstructionRecord) -> float:
    if item.format == "mcq":
        return 1.0 / len(item.mcq_options)
    if item.format == "yes_no":
        return 0.5
    return 0.0


def decontaminate(items, gateway: Gateway, k_trials: int = 5, margin: float = 0.2,
                  equiv_gateway: Gateway | None = None) -> DecontaminationResult:
    """Drop items a text-only probe answers correctly more often than chance
    plus `margin` over `k_trials` independent tries. Gateway failures mark the
    item undecided and keep it. Never grows the item list; idempotent against
    a frozen probe transcript."""
    equiv_gateway = equiv_gateway or gateway
    result = DecontaminationResult(kept=[], dropped=[])
    for item in items:
        try:
            correct = sum(
                _probe_correct(item, gateway.chat(_probe_request(item, t)).text, equiv_gateway)
                for t in range(k_trials))
        except GatewayError:
            result.undecided_ids.append(item.id)
            result.kept.append(item)
            continue
        if correct / k_trials > chance_level(item) + margin:
            result.dropped.append(replace(item, contaminated=True))
        else:
            result.kept.append(item)
    return result


# --- statistics ---

def dataset_stats(items, image_meta: dict | None = None, tolerance: float = 0.25) -> dict:
    """Exact counts per part/format/auth/generator with uniform-balance flags.
    `image_meta` maps image_id -> (auth, generator); auth/generator tallies
    stay empty without it."""
    report = {
        "total": len(items),
        "per_part": {p: 0 for p in PART_TAGS},
        "per_format": {f: 0 for f in FORMATS},
        "per_auth": {},
        "per_generator": {},
        "balance_flags": [],
    }
    for item in items:
        report["per_part"][item.part] += 1
        report["per_format"][item.format] += 1
        if image_meta and item.image_id in image_meta:
            auth, generator = image_meta[item.image_id]
            report["per_auth"][auth] = report["per_auth"].get(auth, 0) + 1
            if generator:
                report["per_generator"][generator] = report["per_generator"].get(generator, 0) + 1
    for dimension in ("per_part", "per_format", "per_auth", "per_generator"):
        counts = {k: v for k, v in report[dimension].items() if v > 0}
        if len(counts) < 2:
            continue
        share = sum(counts.values()) / len(counts)
        for klass, count in sorted(counts.items()):
            if abs(count - share) / share > tolerance:
                report["balance_flags"].append(
                    {"dimension": dimension, "class": klass, "count": count,
                     "uniform_share": share})
    return report


# --- orchestration ---

def forge_dataset(records, rewriters: tuple[Gateway, Gateway],
                  quotas: dict | None = None, seed: int = 0) -> tuple[list[InstructionRecord], list[dict]]:
    """All four parts for every reasoning record, in stable order."""
    quotas = {**DEFAULT_QUOTAS, **(quotas or {})}
    items: list[InstructionRecord] = []
    skips: list[dict] = []
    for record in records:
        items += gen_part1(record, quota=quotas["p1"], seed=seed)
        items += gen_part2(record, quota=quotas["p2"], seed=seed)
        for part_fn, key in ((gen_part3, "p3"), (gen_part4, "p4")):
            part_items, part_skips = part_fn(record, rewriters, quota=quotas[key], seed=seed)
            items += part_items
            skips += part_skips
    return items, skips


def write_instructions(items, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for item in items:
            f.write(item.to_json() + "\n")


def load_instructions(path) -> list[InstructionRecord]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(InstructionRecord.from_dict(json.loads(line)))
    return out
