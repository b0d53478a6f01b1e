"""Corpus ingestion, sample persistence, multi-turn conversion, statistics.

Three JSONL formats:

* ``vqa.jsonl`` input rows: ``{image, question, answer}`` (optional ``id``)
* ``com.jsonl`` rows: ``{id, images, question, segments, answer, provenance}``
* ``multiturn.jsonl`` rows: ``{id, turns: [{image, prompt, response}],
  launching_prompt_id}``

Image refs are relative paths; an optional ``#sha256=...`` suffix carries a
content hash and is ignored for resolution.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .dsl import parse_step
from .errors import DatasetIOError

# Prompt variants that may prefix the first turn's question. {QUESTION} is
# replaced by the actual question text.
LAUNCHING_PROMPTS = (
    "Please solve the problem gradually via a chain of manipulations, where in "
    "each step you can selectively adopt one of the following manipulations "
    "GROUNDING(a phrase)->boxes, OCR(an image or a region)->texts, "
    "CROP_AND_ZOOMIN(a region on given image)->new_image, CALCULATE(a "
    "computable target)->numbers, or invent a new manipulation, if that seems "
    "helpful. {QUESTION}",
    "Please tackle a given question in a step-by-step manner. For each step "
    "one of the following manipulations (depicted as Name(Input)->Return) can "
    "be optionally used: GROUNDING(a phrase)->boxes, OCR(an image or a "
    "region)->texts, CROP_AND_ZOOMIN(a region on given image)->new_image, "
    "CALCULATE(a computable target)->numbers, or develop a new manipulation "
    "yourself (if it is indeed required). {QUESTION}",
    "Please go through the question incrementally with chain of manipulations "
    "(optionally use manipulation when needed) such as GROUNDING(a "
    "phrase)->boxes, OCR(an image or a region)->texts, CROP_AND_ZOOMIN(a "
    "region on given image)->new_image, CALCULATE(a computable "
    "target)->numbers, and create a new manipulation if necessary. {QUESTION}",
)

DEFAULT_CONTINUATION_PROMPT = (
    "Please answer the question based on the above reasoning and the new image."
)


@dataclass(frozen=True)
class VqaTriple:
    image_ref: str
    question: str
    answer: str
    qa_id: str = ""
    source: str = ""

    def __post_init__(self):
        if not self.question or not self.answer:
            raise ValueError("question and answer must be nonempty")


@dataclass(frozen=True)
class CoMSample:
    sample_id: str
    images: tuple[str, ...]
    question: str
    segments: tuple[str, ...]
    answer: str
    provenance: dict

    def __post_init__(self):
        if not self.answer:
            raise ValueError("answer must be nonempty")
        if len(self.images) not in (len(self.segments), len(self.segments) + 1):
            raise ValueError(
                f"{len(self.images)} images do not fit {len(self.segments)} segments"
            )

    def to_json_dict(self) -> dict:
        return {
            "id": self.sample_id,
            "images": list(self.images),
            "question": self.question,
            "segments": list(self.segments),
            "answer": self.answer,
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "CoMSample":
        return cls(
            sample_id=str(data["id"]),
            images=tuple(data["images"]),
            question=data["question"],
            segments=tuple(data["segments"]),
            answer=data["answer"],
            provenance=dict(data.get("provenance", {})),
        )


@dataclass(frozen=True)
class MultiTurnSample:
    sample_id: str
    turns: tuple[tuple[str, str, str], ...]  # (image_ref, prompt, response)
    launching_prompt_id: Optional[int] = None

    def to_json_dict(self) -> dict:
        return {
            "id": self.sample_id,
            "turns": [
                {"image": image, "prompt": prompt, "response": response}
                for image, prompt, response in self.turns
            ],
            "launching_prompt_id": self.launching_prompt_id,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "MultiTurnSample":
        return cls(
            sample_id=str(data["id"]),
            turns=tuple(
                (t["image"], t["prompt"], t["response"]) for t in data["turns"]
            ),
            launching_prompt_id=data.get("launching_prompt_id"),
        )


@dataclass
class LineError:
    line_number: int
    message: str


@dataclass
class LoadResult:
    items: list
    errors: list[LineError] = field(default_factory=list)


def _iter_jsonl(path):
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DatasetIOError(path, f"cannot open: {exc}") from exc
    with handle:
        for lineno, raw in enumerate(handle, 1):
            if raw.strip():
                yield lineno, raw


def load_vqa_jsonl(path, source: str = "") -> LoadResult:
    """Read input triples, keeping order; bad lines go to the error list."""
    result = LoadResult(items=[])
    for lineno, raw in _iter_jsonl(path):
        try:
            data = json.loads(raw)
            triple = VqaTriple(
                image_ref=str(data["image"]),
                question=str(data["question"]),
                answer=str(data["answer"]),
                qa_id=str(data.get("id", f"line{lineno}")),
                source=source,
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            result.errors.append(LineError(lineno, str(exc)))
            continue
        result.items.append(triple)
    return result


def _write_jsonl(rows, path):
    try:
        with open(path, "w", encoding="utf-8") as handle:
            for row in rows:
                handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    except OSError as exc:
        raise DatasetIOError(path, f"cannot write: {exc}") from exc


def write_com_jsonl(samples, path) -> None:
    _write_jsonl((s.to_json_dict() for s in samples), path)


def load_com_jsonl(path) -> LoadResult:
    result = LoadResult(items=[])
    for lineno, raw in _iter_jsonl(path):
        try:
            result.items.append(CoMSample.from_json_dict(json.loads(raw)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            result.errors.append(LineError(lineno, str(exc)))
    return result


def write_multiturn_jsonl(samples, path) -> None:
    _write_jsonl((s.to_json_dict() for s in samples), path)


def load_multiturn_jsonl(path) -> LoadResult:
    result = LoadResult(items=[])
    for lineno, raw in _iter_jsonl(path):
        try:
            result.items.append(MultiTurnSample.from_json_dict(json.loads(raw)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            result.errors.append(LineError(lineno, str(exc)))
    return result


# --- multi-turn conversion ---------------------------------------------------

@dataclass(frozen=True)
class ConvertConfig:
    launching_probability: float = 0.5
    launching_prompts: tuple[str, ...] = LAUNCHING_PROMPTS
    continuation_prompt: str = DEFAULT_CONTINUATION_PROMPT


def convert_to_multiturn(sample: CoMSample, config: ConvertConfig, rng: random.Random) -> MultiTurnSample:
    """Wrap a sample's segments into turns, one per image.

    With the configured probability the first prompt gets a launching prefix
    chosen among the variants; later turns use the continuation prompt.
    Segment text is never altered. When there is one image more than there
    are segments, the final turn's response is the bare answer.
    """
    prompt_id = None
    first_prompt = sample.question
    if config.launching_probability > 0 and rng.random() < config.launching_probability:
        prompt_id = rng.randrange(len(config.launching_prompts))
        first_prompt = config.launching_prompts[prompt_id].replace(
            "{QUESTION}", sample.question
        )
    turns = []
    for i, image in enumerate(sample.images):
        prompt = first_prompt if i == 0 else config.continuation_prompt
        response = sample.segments[i] if i < len(sample.segments) else sample.answer
        turns.append((image, prompt, response))
    return MultiTurnSample(sample.sample_id, tuple(turns), prompt_id)


def convert_corpus(samples, config: ConvertConfig, seed: int) -> list[MultiTurnSample]:
    """Deterministic corpus conversion: one seeded generator drives every
    sample in order."""
    rng = random.Random(seed)
    return [convert_to_multiturn(s, config, rng) for s in samples]


# --- statistics ---------------------------------------------------------------

@dataclass
class StatsBucket:
    qa_ids: set = field(default_factory=set)
    chain_count: int = 0
    total_steps: int = 0
    total_manipulation_types: int = 0

    def add(self, qa_key, steps: int, types: int):
        self.qa_ids.add(qa_key)
        self.chain_count += 1
        self.total_steps += steps
        self.total_manipulation_types += types

    @property
    def qa_count(self) -> int:
        return len(self.qa_ids)

    @property
    def avg_steps_per_chain(self) -> Optional[Fraction]:
        if self.chain_count == 0:
            return None
        return Fraction(self.total_steps, self.chain_count)

    @property
    def avg_manipulation_types_per_chain(self) -> Optional[Fraction]:
        if self.chain_count == 0:
            return None
        return Fraction(self.total_manipulation_types, self.chain_count)

    def to_json_dict(self) -> dict:
        return {
            "qa_count": self.qa_count,
            "chain_count": self.chain_count,
            "avg_steps_per_chain": _render_avg(self.avg_steps_per_chain),
            "avg_manipulation_types_per_chain": _render_avg(
                self.avg_manipulation_types_per_chain
            ),
        }


def _render_avg(value: Optional[Fraction]) -> Optional[str]:
    if value is None:
        return None
    return f"{float(value):.2f}"


@dataclass
class DatasetStats:
    overall: StatsBucket
    per_source: dict

    def to_json_dict(self) -> dict:
        data = self.overall.to_json_dict()
        data["per_source"] = {
            name: bucket.to_json_dict() for name, bucket in sorted(self.per_source.items())
        }
        return data


def _chain_measurements(sample: CoMSample) -> tuple[int, int]:
    """Step count and distinct manipulation-name count for one sample.

    Steps are the nonblank lines across segments; names come from parsing
    each line. Lines that fail to parse still count as steps.
    """
    steps = 0
    names = set()
    for segment in sample.segments:
        for line in segment.splitlines():
            if not line.strip():
                continue
            steps += 1
            try:
                parsed = parse_step(line)
            except Exception:
                continue
            names.update(call.name.name for call in parsed.calls)
    return steps, len(names)


def compute_stats(samples) -> DatasetStats:
    """Exact counts; averages are rationals over chains, not questions."""
    overall = StatsBucket()
    per_source: dict[str, StatsBucket] = {}
    for sample in samples:
        source = sample.provenance.get("source", "")
        qa_key = (source, sample.provenance.get("qa_id", sample.sample_id))
        steps, types = _chain_measurements(sample)
        overall.add(qa_key, steps, types)
        per_source.setdefault(source, StatsBucket()).add(qa_key, steps, types)
    return DatasetStats(overall=overall, per_source=per_source)
