"""Keypoints-aware scoring of predicted manipulation chains against gold.

The score combines two views of a chain:

* a manipulation score ``s_k``: the predicted and gold chains are reduced to
  ordered keypoint lists (name, parameters, result of each call), both lists
  are discretized over their shared bag of elements, and similarity is
  ``1 - levenshtein(pred, gold) / max_len``;
* a paragraph score ``s_c``: BLEU of the predicted chain text against the
  gold chain text.

The combined accuracy is ``(0.6 * s_k + 0.4 * s_c) / divisor``. The divisor
defaults to 2, matching the formula as written; with the maximum therefore
at 0.5, a divisor of 1 is exposed for a true 0..1 scale. Reports always
carry the raw sub-scores.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .dsl import Chain, VarRef
from .values import render_value

KEYPOINT_MANIP = "manip"
KEYPOINT_PARAM = "param"
KEYPOINT_RESULT = "result"

_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class Keypoint:
    kind: str
    surface: str


def _collapse(text: str) -> str:
    return _WS_RE.sub(" ", text.strip())


def extract_keypoints(chain: Chain, bindings: Optional[dict] = None) -> list[Keypoint]:
    """One name keypoint, one per parameter, and one result per call.

    Results render through the fixed value printer when a binding is known;
    otherwise the result variable itself is the surface. Call-free steps
    contribute nothing.
    """
    bindings = bindings or {}
    points = []
    for _, _, call in chain.calls():
        points.append(Keypoint(KEYPOINT_MANIP, call.name.name))
        for arg in call.args:
            surface = arg.var if isinstance(arg, VarRef) else _collapse(arg.text)
            points.append(Keypoint(KEYPOINT_PARAM, surface))
        value = bindings.get(call.result_var)
        surface = render_value(value) if value is not None else call.result_var
        points.append(Keypoint(KEYPOINT_RESULT, surface))
    return points


def discretize(pred: list[Keypoint], gold: list[Keypoint]) -> tuple[list[int], list[int]]:
    """Index both lists over their shared element bag.

    Indices are assigned by first occurrence, gold first, then pred.
    """
    indices: dict[Keypoint, int] = {}
    for point in list(gold) + list(pred):
        if point not in indices:
            indices[point] = len(indices)
    return [indices[p] for p in pred], [indices[p] for p in gold]


def levenshtein(a, b) -> int:
    """Unit-cost edit distance between two sequences."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, item_a in enumerate(a, 1):
        current = [i]
        for j, item_b in enumerate(b, 1):
            cost = 0 if item_a == item_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[len(b)]


def manipulation_score(pred: list[Keypoint], gold: list[Keypoint]) -> Fraction:
    """Similarity 1 - dist/N with N the longer length; 1 when both empty."""
    pred_idx, gold_idx = discretize(pred, gold)
    n = max(len(pred_idx), len(gold_idx))
    if n == 0:
        return Fraction(1)
    return 1 - Fraction(levenshtein(pred_idx, gold_idx), n)


def bleu(candidate: str, reference: str, max_order: int = 4, smooth: bool = False) -> float:
    """Sentence BLEU with whitespace tokens.

    Geometric mean of modified n-gram precisions up to ``max_order`` with a
    brevity penalty. Without smoothing, any zero precision zeroes the score;
    add-one smoothing is available for very short texts.
    """
    cand = candidate.split()
    ref = reference.split()
    if not cand:
        return 0.0
    log_sum = 0.0
    for order in range(1, max_order + 1):
        cand_ngrams = Counter(tuple(cand[i : i + order]) for i in range(len(cand) - order + 1))
        ref_ngrams = Counter(tuple(ref[i : i + order]) for i in range(len(ref) - order + 1))
        overlap = sum(min(count, ref_ngrams[gram]) for gram, count in cand_ngrams.items())
        total = sum(cand_ngrams.values())
        if smooth:
            overlap += 1
            total += 1
        if overlap == 0 or total == 0:
            return 0.0
        log_sum += math.log(overlap / total) / max_order
    brevity = 1.0 if len(cand) > len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return brevity * math.exp(log_sum)


def chain_text(chain: Chain) -> str:
    return "\n".join(step.raw_text for step in chain.steps)


@dataclass(frozen=True)
class MetricReport:
    s_k: Fraction
    s_c: float
    acc: float
    divisor: int
    pred_keypoints: tuple[Keypoint, ...]
    gold_keypoints: tuple[Keypoint, ...]

    def to_json_dict(self) -> dict:
        return {
            "s_k": float(self.s_k),
            "s_c": self.s_c,
            "acc": self.acc,
            "divisor": self.divisor,
            "pred_keypoints": [[p.kind, p.surface] for p in self.pred_keypoints],
            "gold_keypoints": [[p.kind, p.surface] for p in self.gold_keypoints],
        }


def com_score(
    pred: Chain,
    gold: Chain,
    divisor: int = 2,
    smooth: bool = False,
    pred_bindings: Optional[dict] = None,
    gold_bindings: Optional[dict] = None,
) -> MetricReport:
    """Score a predicted chain against a gold chain."""
    if divisor not in (1, 2):
        raise ValueError(f"divisor must be 1 or 2, got {divisor}")
    pred_points = extract_keypoints(pred, pred_bindings)
    gold_points = extract_keypoints(gold, gold_bindings)
    s_k = manipulation_score(pred_points, gold_points)
    s_c = bleu(chain_text(pred), chain_text(gold), smooth=smooth)
    acc = (0.6 * float(s_k) + 0.4 * s_c) / divisor
    return MetricReport(
        s_k=s_k,
        s_c=s_c,
        acc=acc,
        divisor=divisor,
        pred_keypoints=tuple(pred_points),
        gold_keypoints=tuple(gold_points),
    )
