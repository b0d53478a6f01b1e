"""The keypoints-aware metric, step by step.

Run: python3 demos/score_chains.py
"""

from comforge import parse_chain
from comforge.metric import (
    bleu,
    com_score,
    discretize,
    extract_keypoints,
    levenshtein,
    manipulation_score,
)
from comforge.values import Box, Text

gold = parse_chain(
    "Using GROUNDING(the pillar)->bbx_1 to locate it.\n"
    "Using OCR(bbx_1)->txt_1 to read the text."
)
pred = parse_chain(
    "Using GROUNDING(the lamp)->bbx_1 to locate it.\n"
    "Using OCR(bbx_1)->txt_1 to read the text."
)

# 1. Each call contributes its name, parameters, and result, in order.
gold_points = extract_keypoints(gold, bindings={"bbx_1": Box(1, 2, 3, 4), "txt_1": Text("STOP")})
for p in gold_points:
    print(f"  {p.kind:<7} {p.surface}")

# 2. Both lists are discretized over their shared element bag, then compared
#    with plain edit distance; similarity is 1 - distance / max length.
pred_points = extract_keypoints(pred)
pred_idx, gold_idx = discretize(pred_points, extract_keypoints(gold))
print("pred indices:", pred_idx)
print("gold indices:", gold_idx)
print("edit distance:", levenshtein(pred_idx, gold_idx))
print("manipulation score:", manipulation_score(pred_points, extract_keypoints(gold)))

# 3. The paragraph side is BLEU over the chain text.
print("paragraph score:", round(bleu(
    "\n".join(s.raw_text for s in pred.steps),
    "\n".join(s.raw_text for s in gold.steps),
), 4))

# 4. Combined: (0.6 * s_k + 0.4 * s_c) / divisor. The divisor defaults to 2
#    (the formula as written, max 0.5); pass divisor=1 for a 0..1 scale.
report = com_score(pred, gold)
print(f"s_k={float(report.s_k):.4f}  s_c={report.s_c:.4f}  acc={report.acc:.4f} (divisor 2)")
print("identical chains, divisor 1 ->", com_score(gold, gold, divisor=1).acc)
