"""Clients for the linguistic annotator (an LLM) and the visual annotators
(grounding detector, OCR engine), plus deterministic fixture-backed mocks.

Live annotators speak a small HTTP JSON protocol:

    POST /v1/ground   {image_b64, phrase}   -> {boxes: [{x0,y0,x1,y1,score}]}
    POST /v1/ocr      {image_b64, region?}  -> {items: [{text, box}]}
    POST /v1/complete {prompt}              -> {text}

Box coordinates on the wire are already normalized to 0..999. Endpoints come
from COMFORGE_GROUND_URL, COMFORGE_OCR_URL, and COMFORGE_LLM_URL; retry count
from COMFORGE_HTTP_RETRIES.

Mocks replay JSONL fixtures of ``{request_key, response}`` rows, where
request_key is the SHA-256 of the canonicalized request, so the same request
always returns the same response.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass
from typing import Optional

import requests

from .dsl import Chain, parse_chain
from .errors import TransportError, WrongDemoCount
from .images import ImageBuffer, encode_png_bytes
from .values import Box

ENV_GROUND_URL = "COMFORGE_GROUND_URL"
ENV_OCR_URL = "COMFORGE_OCR_URL"
ENV_LLM_URL = "COMFORGE_LLM_URL"
ENV_HTTP_RETRIES = "COMFORGE_HTTP_RETRIES"

DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 0.25
DEFAULT_DEMO_COUNT = 5
DEFAULT_SCORE_THRESHOLD = 0.25
DEFAULT_MAX_BOXES = 4

DEFAULT_GUIDELINE = """\
You are given an image and a question about it. Solve the question step by
step. In each step you may use one manipulation on the image, written as
NAME(input)->result_variable, choosing from:
  GROUNDING(a phrase)->bbx_k       find boxes for the phrase
  OCR(an image or a region)->txt_k read text from the image or a region
  CROP_AND_ZOOMIN(bbx_k, x)->img_k crop a region and magnify it x times
  COUNTING(bbx_k)->num_k           count distinct boxes
  CALCULATE(a formula)->num_k      evaluate arithmetic
  LINE(points)->img_k              draw auxiliary lines
You may invent a new manipulation if none fits. Boxes are written with
coordinates normalized to 0..999. Write one step per line, refer to earlier
results by their variables, and end with a line "Answer: ..." giving the
final answer."""

DEFAULT_DEMONSTRATIONS = (
    "Question: what is written on the pillar?\n"
    "Using GROUNDING(the pillar)->bbx_1 to locate the pillar.\n"
    "Using OCR(bbx_1)->txt_1 to read the text on it.\n"
    "Answer: txt_1",
    "Question: how many sheep are in the field?\n"
    "Using GROUNDING(the sheep)->bbx_1 to find every sheep.\n"
    "Count them with COUNTING(bbx_1)->num_1\n"
    "Answer: num_1",
    "Question: what is the license plate number?\n"
    "Using GROUNDING(the car)->bbx_1 to find the car.\n"
    "Zoom in with CROP_AND_ZOOMIN(bbx_1, 2)->img_1\n"
    "Using OCR(img_1)->txt_1 to read the plate.\n"
    "Answer: txt_1",
    "Question: what is the sum of the two printed numbers?\n"
    "Using GROUNDING(the printed numbers)->bbx_1 to find them.\n"
    "Using OCR(bbx_1)->txt_1 to read the formula.\n"
    "The sum is CALCULATE(txt_1)->num_1\n"
    "Answer: num_1",
    "Question: what color is the left mug?\n"
    "The left mug is plainly visible and it is green.\n"
    "Answer: green",
)


# --- linguistic prompt ------------------------------------------------------

@dataclass(frozen=True)
class LinguisticPrompt:
    guideline: str
    demonstrations: tuple[str, ...]
    question: str

    def serialize(self) -> str:
        parts = [self.guideline.rstrip()]
        for i, demo in enumerate(self.demonstrations, 1):
            parts.append(f"Example {i}:\n{demo.rstrip()}")
        parts.append(f"Question: {self.question}")
        return "\n\n".join(parts)


def build_linguistic_prompt(guideline, demos, question, demo_count=DEFAULT_DEMO_COUNT):
    demos = tuple(demos)
    if len(demos) != demo_count:
        raise WrongDemoCount(f"expected {demo_count} demonstrations, got {len(demos)}")
    return LinguisticPrompt(guideline=guideline, demonstrations=demos, question=question)


def default_prompt(question: str) -> LinguisticPrompt:
    return build_linguistic_prompt(DEFAULT_GUIDELINE, DEFAULT_DEMONSTRATIONS, question)


# --- requests and results ---------------------------------------------------

@dataclass(frozen=True)
class VisualRequest:
    kind: str  # "ground" | "ocr"
    image: ImageBuffer
    phrase: Optional[str] = None
    region: Optional[Box] = None

    def __post_init__(self):
        if self.kind == "ground" and not self.phrase:
            raise ValueError("grounding needs a nonempty phrase")
        if self.kind not in ("ground", "ocr"):
            raise ValueError(f"unknown request kind {self.kind!r}")


@dataclass(frozen=True)
class VisualResult:
    boxes: tuple = ()  # ((Box, confidence), ...)
    texts: tuple = ()  # ((text, Box), ...)

    def __post_init__(self):
        for box, score in self.boxes:
            if not (0.0 <= score <= 1.0):
                raise ValueError(f"confidence out of range: {score}")


def canonical_request(request: VisualRequest) -> dict:
    payload = {"op": request.kind, "image": request.image.ident}
    if request.kind == "ground":
        payload["phrase"] = request.phrase
    else:
        payload["region"] = list(request.region.as_tuple()) if request.region else None
    return payload


def request_key(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def completion_request_key(prompt_text: str) -> str:
    return request_key({"op": "complete", "prompt": prompt_text})


# --- retry machinery --------------------------------------------------------

def _retries_from_env() -> int:
    raw = os.environ.get(ENV_HTTP_RETRIES)
    return int(raw) if raw else DEFAULT_RETRIES


def call_with_retries(fn, retries=None, backoff=DEFAULT_BACKOFF, sleep=time.sleep):
    """Run fn(), retrying transient failures with exponential backoff."""
    retries = _retries_from_env() if retries is None else retries
    attempts = 0
    while True:
        attempts += 1
        try:
            return fn()
        except (requests.RequestException, TransportError) as exc:
            if attempts > retries:
                raise TransportError(
                    f"gave up after {attempts} attempts: {exc}", attempts=attempts
                ) from exc
            sleep(backoff * (2 ** (attempts - 1)))


class RateLimiter:
    """Bounds the number of requests in flight at once."""

    def __init__(self, max_in_flight: int):
        self._sem = threading.Semaphore(max_in_flight)

    def __enter__(self):
        self._sem.acquire()
        return self

    def __exit__(self, *exc):
        self._sem.release()
        return False


class _NullLimiter:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


# --- HTTP clients -----------------------------------------------------------

@dataclass
class AnnotatorConfig:
    score_threshold: float = DEFAULT_SCORE_THRESHOLD
    max_boxes: int = DEFAULT_MAX_BOXES
    retries: Optional[int] = None
    backoff: float = DEFAULT_BACKOFF


def _boxes_from_wire(items) -> tuple:
    out = []
    for item in items:
        box = Box(int(item["x0"]), int(item["y0"]), int(item["x1"]), int(item["y1"]))
        out.append((box, float(item.get("score", 1.0))))
    return tuple(out)


def _texts_from_wire(items) -> tuple:
    out = []
    for item in items:
        raw = item.get("box")
        box = Box(*[int(v) for v in raw]) if raw else Box(0, 0, 999, 999)
        out.append((str(item["text"]), box))
    return tuple(out)


class HttpVisualClient:
    """Grounding and OCR over the JSON protocol above."""

    def __init__(self, ground_url=None, ocr_url=None, config: AnnotatorConfig | None = None,
                 limiter=None, session=None, sleep=time.sleep):
        self.ground_url = ground_url or os.environ.get(ENV_GROUND_URL)
        self.ocr_url = ocr_url or os.environ.get(ENV_OCR_URL)
        self.config = config or AnnotatorConfig()
        self.limiter = limiter or _NullLimiter()
        self.session = session or requests.Session()
        self.sleep = sleep

    def _post(self, url, payload):
        def attempt():
            resp = self.session.post(url, json=payload, timeout=30)
            resp.raise_for_status()
            return resp.json()

        with self.limiter:
            return call_with_retries(
                attempt, retries=self.config.retries, backoff=self.config.backoff, sleep=self.sleep
            )

    def resolve(self, request: VisualRequest) -> VisualResult:
        image_b64 = base64.b64encode(encode_png_bytes(request.image)).decode("ascii")
        if request.kind == "ground":
            if not self.ground_url:
                raise TransportError(f"no grounding endpoint; set {ENV_GROUND_URL}")
            data = self._post(self.ground_url.rstrip("/") + "/v1/ground",
                              {"image_b64": image_b64, "phrase": request.phrase})
            return VisualResult(boxes=_boxes_from_wire(data.get("boxes", [])))
        if not self.ocr_url:
            raise TransportError(f"no OCR endpoint; set {ENV_OCR_URL}")
        payload = {"image_b64": image_b64}
        if request.region is not None:
            payload["region"] = list(request.region.as_tuple())
        data = self._post(self.ocr_url.rstrip("/") + "/v1/ocr", payload)
        return VisualResult(texts=_texts_from_wire(data.get("items", [])))


class HttpLinguisticClient:
    def __init__(self, url=None, config: AnnotatorConfig | None = None, limiter=None,
                 session=None, sleep=time.sleep):
        self.url = url or os.environ.get(ENV_LLM_URL)
        self.config = config or AnnotatorConfig()
        self.limiter = limiter or _NullLimiter()
        self.session = session or requests.Session()
        self.sleep = sleep

    def complete(self, prompt_text: str) -> str:
        if not self.url:
            raise TransportError(f"no completion endpoint; set {ENV_LLM_URL}")

        def attempt():
            resp = self.session.post(self.url.rstrip("/") + "/v1/complete",
                                     json={"prompt": prompt_text}, timeout=60)
            resp.raise_for_status()
            return resp.json()["text"]

        with self.limiter:
            return call_with_retries(
                attempt, retries=self.config.retries, backoff=self.config.backoff, sleep=self.sleep
            )


# --- fixture-backed mocks ---------------------------------------------------

def load_fixture(path) -> dict:
    table = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            table[row["request_key"]] = row["response"]
    return table


def dump_fixture(table: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for key in sorted(table):
            handle.write(json.dumps({"request_key": key, "response": table[key]},
                                    sort_keys=True, ensure_ascii=True) + "\n")


class MockVisualClient:
    """Replays grounding/OCR responses from fixture tables.

    A request with no fixture entry yields an empty result, which reads as
    "target absent".
    """

    def __init__(self, ground_fixture=None, ocr_fixture=None, config: AnnotatorConfig | None = None):
        self.ground_table = dict(ground_fixture or {})
        self.ocr_table = dict(ocr_fixture or {})
        self.config = config or AnnotatorConfig()

    def resolve(self, request: VisualRequest) -> VisualResult:
        key = request_key(canonical_request(request))
        if request.kind == "ground":
            data = self.ground_table.get(key)
            return VisualResult(boxes=_boxes_from_wire(data["boxes"]) if data else ())
        data = self.ocr_table.get(key)
        return VisualResult(texts=_texts_from_wire(data["items"]) if data else ())


class MockLinguisticClient:
    def __init__(self, fixture=None):
        self.table = dict(fixture or {})

    def complete(self, prompt_text: str) -> str:
        key = completion_request_key(prompt_text)
        if key not in self.table:
            raise TransportError(f"no completion fixture for request {key[:12]}...")
        return self.table[key]["text"]


class FlakyVisualClient:
    """Fault injection wrapper: deterministically fails a fraction of
    grounding calls, for resilience drills."""

    def __init__(self, inner, fail_rate: float, seed: int):
        self.inner = inner
        self.fail_rate = fail_rate
        self.rng = random.Random(seed)

    def resolve(self, request: VisualRequest) -> VisualResult:
        if request.kind == "ground" and self.rng.random() < self.fail_rate:
            raise TransportError("injected grounding failure", attempts=1)
        return self.inner.resolve(request)


# --- high-level operations ---------------------------------------------------

def filter_boxes(result: VisualResult, config: AnnotatorConfig) -> list[Box]:
    """Confidence-threshold then cap, keeping the original order."""
    kept = [box for box, score in result.boxes if score >= config.score_threshold]
    return kept[: config.max_boxes]


def request_solving_steps(prompt: LinguisticPrompt, client) -> Chain:
    """Ask the linguistic annotator for solving steps and parse them.

    The returned chain's manipulation results are unresolved placeholders;
    execution fills them in later. A ChainParseError keeps the raw
    completion for auditing.
    """
    completion = client.complete(prompt.serialize())
    return parse_chain(completion)


def resolve_visual(request: VisualRequest, client) -> VisualResult:
    return client.resolve(request)
