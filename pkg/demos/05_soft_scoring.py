"""Detection walkthrough: anchor-token soft scoring against the mock endpoint,
threshold classification, and qualitative verdict parsing.

    python3 demos/05_soft_scoring.py
"""

from tracekit.gateway import ScriptedGateway
from tracekit.softscore import (
    AnchorConfig,
    auth_request,
    classify,
    estimate,
    estimate_from_table,
    parse_polarity,
)

gateway = ScriptedGateway(seed=5)

print("the standardized two-turn prompt:")
req = auth_request("uri://demo/fake_7.png")
for m in req.messages:
    print(f"  {m.role.upper()}: {m.content}")

print("\nscoring a few mock images (path hints steer the mock's bias):")
for ref in ("uri://demo/fake_7.png", "uri://demo/fake_8.png",
            "uri://demo/real_7.png", "uri://demo/real_8.png"):
    p = estimate(ref, gateway)
    print(f"  {ref:28s} p_fake={p.p_fake:.4f} -> {classify(p, 0.5)}"
          + (f"  (missing: {p.missing_tokens})" if p.missing_tokens else ""))

print("\nthe estimator is a plain class-sum softmax; a worked table:")
table = {"fake": 1.2, "Fake": 0.5, "FAKE": 0.3, "real": -0.2, "Real": -0.1, "REAL": -0.4}
p = estimate_from_table(table, AnchorConfig())
print(f"  sums: fake={1.2 + 0.5 + 0.3:.1f}, real={-0.2 - 0.1 - 0.4:.1f} -> p_fake={p.p_fake:.6f}")

shifted = estimate_from_table({k: v + 100 for k, v in table.items()})
print(f"  shifting every logit by +100 changes nothing: p_fake={shifted.p_fake:.6f}")

print("\nqualitative replies parse with a negation window:")
for reply in ("This image is fake.", "It is not a real photograph",
              "Looks genuine to me.", "I cannot determine this"):
    label, _ = parse_polarity(reply)
    print(f"  {reply!r} -> {label or 'unparseable'}")
