"""Instruction-forging walkthrough: the four parts, text-only decontamination,
and balance statistics.

    python3 demos/04_instruction_forge.py
"""

import json
from collections import Counter

from tracekit.gateway import ScriptedGateway
from tracekit.instructions import (
    dataset_stats,
    decontaminate,
    forge_dataset,
    gen_part1,
    gen_part3,
)
from tracekit.reasoning import ReasoningRecord

records = [
    ReasoningRecord(
        image_id=f"img-{i:03d}", auth="fake" if i % 2 else "real",
        rsn=("The texture across the sky looks brushed and repetitive. "
             "The edge of the tower bends where masonry should be straight. "
             f"Sample {i} closes the case. "
             + ("Thus, this image is fake." if i % 2 else "Thus, this image is real.")),
        steering=("texture", "edge"), exemplar_ids=("ex-0001", "ex-0002"),
        model_tag="mock-v1", attempt_count=1)
    for i in range(4)
]

rewriters = (ScriptedGateway(seed=1, model_tag="rewriter-a"),
             ScriptedGateway(seed=2, model_tag="rewriter-b"))

print("part 1 keeps answers to the bare class words:")
for item in gen_part1(records[1]):
    print("  Q:", item.question, "-> A:", item.answer)

items, skips = forge_dataset(records, rewriters, seed=3)
print(f"\nforged {len(items)} items from {len(records)} records ({len(skips)} skipped)")
print("per part:", dict(Counter(i.part for i in items)))
print("per format:", dict(Counter(i.format for i in items)))

mcq = next(i for i in items if i.format == "mcq")
print("\nan MCQ item:")
print("  Q:", mcq.question)
for k, option in enumerate(mcq.mcq_options):
    marker = "*" if k == mcq.correct_index else " "
    print(f"  {marker} {k}) {option}")

print("\nrewriters alternate:", [i.rewriter_tag for i in gen_part3(records[0], rewriters, quota=4)[0]])

result = decontaminate(items, ScriptedGateway(seed=9), k_trials=5, margin=0.2)
print(f"\ndecontamination: kept {len(result.kept)}, dropped {len(result.dropped)},"
      f" undecided {len(result.undecided_ids)}")

meta = {r.image_id: (r.auth, "demo-gen") for r in records}
stats = dataset_stats(result.kept, meta)
print("\nstats:", json.dumps({k: stats[k] for k in ("total", "per_part", "per_auth")}, indent=2))
print("balance flags:", [f["class"] for f in stats["balance_flags"]])
