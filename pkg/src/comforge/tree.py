"""Branching execution of a chain and the search for answer-bearing paths.

A chain whose manipulations can return several results (a grounding call
finding two pillars, an OCR call reading two lines) expands into a tree:
each call becomes one tree level, and every candidate result becomes a
child carrying its own variable binding. A depth-first traversal then
collects the root-to-leaf paths that execute the whole chain without
errors and end at the golden answer.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .annotators import AnnotatorConfig, VisualRequest, filter_boxes
from .dsl import Chain, ManipulationCall, VarRef
from .errors import ComforgeError, TransportError
from .execution import exec_calculate, exec_counting, exec_crop_zoomin, exec_line
from .images import ImageBuffer
from .values import Box, BoxList, ImageRef, Points, Text, Value, render_value

IMAGE_PRODUCING = {"CROP_AND_ZOOMIN", "LINE"}

_VAR_TOKEN_RE = re.compile(r"\b(?:bbx|txt|num|img|pts)_[0-9]+\b")
_POINT_RE = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")
_NUMBER_RE = re.compile(r"[+-]?\d+(?:\.\d+)?\Z")


@dataclass
class MatcherConfig:
    mode: str = "text"  # "text" or "numeric"

    def __post_init__(self):
        if self.mode not in ("text", "numeric"):
            raise ValueError(f"unknown matcher mode {self.mode!r}")


@dataclass
class TreeConfig:
    branch_cap: int = 4
    node_budget: int = 256
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    annotators: AnnotatorConfig = field(default_factory=AnnotatorConfig)


@dataclass
class TreeNode:
    step_index: int
    call_index: int
    call: Optional[ManipulationCall]
    binding: dict  # at most one entry: result_var -> Value
    image: ImageBuffer
    children: list = field(default_factory=list)
    error: Optional[str] = None
    note: str = ""
    is_terminal: bool = False

    def iter_nodes(self):
        yield self
        for child in self.children:
            yield from child.iter_nodes()


@dataclass
class ResolvedChain:
    chain: Chain
    bindings: dict  # var -> Value


@dataclass
class PositivePath:
    nodes: tuple
    resolved_chain: Optional[ResolvedChain]
    answer: str


@dataclass
class SearchReport:
    trees_built: int = 0
    positive_paths: int = 0
    questions_with_path: int = 0

    @property
    def success_rate(self) -> Optional[Fraction]:
        if self.trees_built == 0:
            return None
        return Fraction(self.questions_with_path, self.trees_built)

    def to_json_dict(self) -> dict:
        rate = self.success_rate
        return {
            "trees_built": self.trees_built,
            "positive_paths": self.positive_paths,
            "questions_with_path": self.questions_with_path,
            "success_rate": None if rate is None else float(rate),
        }


def substitute_vars(text: str, env: dict) -> str:
    """Replace bound variable tokens in prose with their rendered values."""

    def repl(match):
        value = env.get(match.group(0))
        return render_value(value) if value is not None else match.group(0)

    return _VAR_TOKEN_RE.sub(repl, text)


# --- answer matching ---------------------------------------------------------

_ARTICLES = {"a", "an", "the"}


def _normalize_answer(text: str) -> str:
    text = text.strip().lower()
    text = text.strip(string.punctuation + string.whitespace)
    words = text.split()
    while words and words[0] in _ARTICLES:
        words = words[1:]
    return " ".join(words)


def _parse_number(text: str):
    stripped = text.strip().strip(string.punctuation.replace("-", "").replace(".", ""))
    if _NUMBER_RE.match(stripped):
        return Fraction(stripped)
    return None


def answer_match(candidate: str, golden: str, config: MatcherConfig | None = None) -> bool:
    """Default: case-fold, strip surrounding punctuation and leading
    articles, collapse whitespace, compare exactly. Numeric mode compares
    parsed numbers when both sides parse."""
    config = config or MatcherConfig()
    if config.mode == "numeric":
        a = _parse_number(candidate)
        b = _parse_number(golden)
        if a is not None and b is not None:
            return a == b
    return _normalize_answer(candidate) == _normalize_answer(golden)


# --- execution ----------------------------------------------------------------

@dataclass
class _Outcome:
    binding: dict
    image: ImageBuffer
    error: Optional[str] = None
    note: str = ""


def _flatten_units(chain: Chain):
    units = []
    for step_idx, step in enumerate(chain.steps):
        if step.calls:
            for call_idx, call in enumerate(step.calls):
                units.append((step_idx, call_idx, call))
        else:
            units.append((step_idx, 0, None))
    return units


def _consumers_by_var(chain: Chain) -> dict:
    consumers: dict[str, set] = {}
    for _, _, call in chain.calls():
        for arg in call.args:
            if isinstance(arg, VarRef):
                consumers.setdefault(arg.var, set()).add(call.name.name)
    return consumers


def _arg_text(arg, env) -> str:
    if isinstance(arg, VarRef):
        value = env.get(arg.var)
        return render_value(value) if value is not None else arg.var
    return substitute_vars(arg.text, env)


def _single_box(value: Value):
    if isinstance(value, Box):
        return value
    if isinstance(value, BoxList):
        if len(value.boxes) == 1:
            return value.boxes[0]
        return None
    return None


def _parse_points(call: ManipulationCall, env):
    pts = []
    for arg in call.args:
        if isinstance(arg, VarRef):
            value = env.get(arg.var)
            if isinstance(value, Points):
                pts.extend(value.points)
                continue
            return None
        for m in _POINT_RE.finditer(arg.text):
            pts.append((int(m.group(1)), int(m.group(2))))
    return pts or None


class _TreeBuilder:
    def __init__(self, chain, visual_client, config: TreeConfig):
        self.chain = chain
        self.client = visual_client
        self.config = config
        self.units = _flatten_units(chain)
        self.consumers = _consumers_by_var(chain)
        self.nodes_created = 1  # the root

    def build(self, image: ImageBuffer) -> TreeNode:
        root = TreeNode(step_index=-1, call_index=-1, call=None, binding={}, image=image)
        root.is_terminal = not self.units
        self._expand(root, 0, {}, {})
        return root

    def _expand(self, parent: TreeNode, unit_idx: int, env: dict, images: dict):
        if unit_idx >= len(self.units):
            return
        step_idx, call_idx, call = self.units[unit_idx]
        outcomes = self._execute(call, env, images, parent.image)
        last = unit_idx == len(self.units) - 1
        for outcome in outcomes:
            if self.nodes_created >= self.config.node_budget:
                parent.note = "node-budget-exhausted"
                return
            node = TreeNode(
                step_index=step_idx,
                call_index=call_idx,
                call=call,
                binding=outcome.binding,
                image=outcome.image,
                error=outcome.error,
                note=outcome.note,
                is_terminal=last and outcome.error is None,
            )
            self.nodes_created += 1
            parent.children.append(node)
            if outcome.error is None and not last:
                child_env = dict(env)
                child_env.update(outcome.binding)
                child_images = images
                for var, value in outcome.binding.items():
                    if isinstance(value, ImageRef):
                        child_images = dict(images)
                        child_images[var] = outcome.image
                self._expand(node, unit_idx + 1, child_env, child_images)

    # -- per-manipulation execution, returning one outcome per child --

    def _execute(self, call, env, images, image) -> list[_Outcome]:
        if call is None:
            return [_Outcome(binding={}, image=image)]
        try:
            name = call.name.name
            if name == "GROUNDING":
                return self._exec_grounding(call, env, image)
            if name == "OCR":
                return self._exec_ocr(call, env, images, image)
            if name == "COUNTING":
                return self._exec_counting(call, env, image)
            if name == "CALCULATE":
                return self._exec_calculate(call, env, image)
            if name == "CROP_AND_ZOOMIN":
                return self._exec_crop(call, env, image)
            if name == "LINE":
                return self._exec_line(call, env, image)
            return [_Outcome({}, image, error=f"no executor for manipulation {name}")]
        except TransportError as exc:
            return [_Outcome({}, image, error=f"transport: {exc}")]
        except (ComforgeError, ZeroDivisionError, ValueError, KeyError) as exc:
            return [_Outcome({}, image, error=f"{type(exc).__name__}: {exc}")]

    def _ground_boxes(self, phrase: str, image) -> list[Box]:
        result = self.client.resolve(VisualRequest("ground", image, phrase=phrase))
        return filter_boxes(result, self.config.annotators)

    def _exec_grounding(self, call, env, image) -> list[_Outcome]:
        phrase = " ".join(_arg_text(a, env) for a in call.args)
        boxes = self._ground_boxes(phrase, image)[: self.config.branch_cap]
        if not boxes:
            return []  # target absent: the branch dies here
        users = self.consumers.get(call.result_var, set())
        if users and users <= {"COUNTING"}:
            # downstream only counts, so keep the whole list in one child
            return [_Outcome({call.result_var: BoxList(tuple(boxes))}, image)]
        return [_Outcome({call.result_var: box}, image) for box in boxes]

    def _exec_ocr(self, call, env, images, image) -> list[_Outcome]:
        region = None
        target = image
        arg = call.args[0]
        if isinstance(arg, VarRef):
            value = env.get(arg.var)
            if isinstance(value, ImageRef):
                target = images.get(arg.var, image)
            else:
                box = _single_box(value) if value is not None else None
                if box is None:
                    return [_Outcome({}, image, error=f"OCR argument {arg.var} is not a region")]
                region = box
        result = self.client.resolve(VisualRequest("ocr", target, region=region))
        texts = [text for text, _ in result.texts][: self.config.branch_cap]
        if not texts:
            return []  # nothing to read on this branch
        return [_Outcome({call.result_var: Text(t)}, image) for t in texts]

    def _exec_counting(self, call, env, image) -> list[_Outcome]:
        arg = call.args[0]
        if isinstance(arg, VarRef):
            value = env.get(arg.var)
            if isinstance(value, BoxList):
                boxes = value
            elif isinstance(value, Box):
                boxes = BoxList((value,))
            else:
                return [_Outcome({}, image, error=f"COUNTING argument {arg.var} is not boxes")]
        else:
            found = self._ground_boxes(substitute_vars(arg.text, env), image)
            boxes = BoxList(tuple(found))
        return [_Outcome({call.result_var: exec_counting(boxes)}, image)]

    def _exec_calculate(self, call, env, image) -> list[_Outcome]:
        expr = ", ".join(_arg_text(a, env) for a in call.args)
        return [_Outcome({call.result_var: exec_calculate(expr)}, image)]

    def _exec_crop(self, call, env, image) -> list[_Outcome]:
        value = env.get(call.args[0].var) if isinstance(call.args[0], VarRef) else None
        box = _single_box(value) if value is not None else None
        if box is None:
            return [_Outcome({}, image, error="CROP_AND_ZOOMIN needs a single box argument")]
        ratio = None
        if len(call.args) > 1:
            raw = _arg_text(call.args[1], env)
            try:
                ratio = Fraction(raw)
            except (ValueError, ZeroDivisionError):
                return [_Outcome({}, image, error=f"bad zoom ratio {raw!r}")]
        produced = exec_crop_zoomin(image, box, ratio)
        return [_Outcome({call.result_var: ImageRef(produced.ident)}, produced)]

    def _exec_line(self, call, env, image) -> list[_Outcome]:
        pts = _parse_points(call, env)
        if pts is None:
            return [_Outcome({}, image, error="LINE needs points")]
        produced = exec_line(image, pts)
        return [_Outcome({call.result_var: ImageRef(produced.ident)}, produced)]


def build_tree(chain: Chain, image: ImageBuffer, visual_client, config: TreeConfig | None = None) -> TreeNode:
    """Execute the chain against the image, branching over multi-result
    manipulations. Executor failures become dead leaves, never exceptions."""
    config = config or TreeConfig()
    return _TreeBuilder(chain, visual_client, config).build(image)


# --- search --------------------------------------------------------------------

def path_env(nodes) -> dict:
    env = {}
    for node in nodes:
        env.update(node.binding)
    return env


def answer_candidates(nodes, chain: Optional[Chain]) -> list[str]:
    """Possible terminal answers of a completed path, most explicit first:
    the declared final answer, the last resolved result, the trailing prose
    of the final step."""
    env = path_env(nodes)
    candidates = []
    if chain is not None and chain.final_answer is not None:
        candidates.append(substitute_vars(chain.final_answer, env))
    last_value = None
    for node in nodes:
        if node.binding:
            last_value = next(iter(node.binding.values()))
    if last_value is not None:
        candidates.append(render_value(last_value))
    if chain is not None and chain.steps and not chain.steps[-1].calls:
        candidates.append(substitute_vars(chain.steps[-1].raw_text.strip(), env))
    seen = set()
    unique = []
    for cand in candidates:
        if cand and cand not in seen:
            seen.add(cand)
            unique.append(cand)
    return unique


def iter_leaf_paths(root: TreeNode):
    """Root-to-leaf node tuples in depth-first preorder."""
    stack = [(root, (root,))]
    out = []
    while stack:
        node, trail = stack.pop()
        if not node.children:
            out.append(trail)
            continue
        for child in reversed(node.children):
            stack.append((child, trail + (child,)))
    return out


def dfs_positive_paths(
    root: TreeNode,
    golden: str,
    matcher: MatcherConfig | None = None,
    chain: Optional[Chain] = None,
) -> list[PositivePath]:
    """Paths that complete the chain error-free and end at the golden answer,
    in depth-first preorder."""
    matcher = matcher or MatcherConfig()
    paths = []
    for trail in iter_leaf_paths(root):
        leaf = trail[-1]
        if not leaf.is_terminal:
            continue
        if any(node.error for node in trail):
            continue
        for candidate in answer_candidates(trail, chain):
            if answer_match(candidate, golden, matcher):
                resolved = (
                    ResolvedChain(chain, path_env(trail)) if chain is not None else None
                )
                paths.append(PositivePath(nodes=trail, resolved_chain=resolved, answer=candidate))
                break
    return paths


def dead_branches(root: TreeNode, golden: str, matcher: MatcherConfig | None = None,
                  chain: Optional[Chain] = None) -> list[dict]:
    """Audit records for every leaf path that is not positive: executor
    errors, early terminations, and answer mismatches."""
    matcher = matcher or MatcherConfig()
    records = []
    for trail in iter_leaf_paths(root):
        leaf = trail[-1]
        errors = [node.error for node in trail if node.error]
        if errors:
            reason = f"error: {errors[0]}"
        elif not leaf.is_terminal:
            reason = "terminated-early"
        else:
            candidates = answer_candidates(trail, chain)
            if any(answer_match(c, golden, matcher) for c in candidates):
                continue  # positive, not dead
            reason = f"answer-mismatch: {candidates!r}"
        records.append(
            {
                "reason": reason,
                "depth": len(trail) - 1,
                "bindings": {
                    var: render_value(val) for node in trail for var, val in node.binding.items()
                },
            }
        )
    return records


# --- conversion to samples -------------------------------------------------------

def resolved_step_text(step, env) -> str:
    """The step with evidence: values appended to non-image calls, variable
    mentions in prose replaced by their values."""
    out = []
    for kind, piece in step.prose_pieces():
        if kind == "prose":
            out.append(substitute_vars(piece, env))
        else:
            call = piece
            if call.name.name in IMAGE_PRODUCING or call.result_var not in env:
                out.append(call.source)
            else:
                out.append(f"{call.source} = {render_value(env[call.result_var])}")
    return "".join(out)


def path_to_com_sample(path: PositivePath, source, sample_id: str,
                       image_namer=None):
    """Regroup a positive path into an image-segmented sample.

    Segment text is the resolved chain text; a new segment starts right
    after each image-producing call. The final segment always ends with the
    answer.
    """
    from .dataset import CoMSample  # local import keeps dataset independent

    if path.resolved_chain is None:
        raise ValueError("path carries no chain to convert")
    chain = path.resolved_chain.chain
    env = path.resolved_chain.bindings
    namer = image_namer or (lambda buffer, index: buffer.ident)

    produced = [node.image for node in path.nodes
                if node.call is not None and node.call.name.name in IMAGE_PRODUCING
                and node.error is None]
    image_refs = [source.image_ref] + [namer(buf, i + 1) for i, buf in enumerate(produced)]

    segments = []
    current: list[str] = []
    for step in chain.steps:
        line = []
        for kind, piece in step.prose_pieces():
            if kind == "prose":
                line.append(substitute_vars(piece, env))
            elif piece.name.name in IMAGE_PRODUCING:
                line.append(piece.source)
                current.append("".join(line))
                segments.append("\n".join(part for part in current if part.strip()))
                current = []
                line = []
            elif piece.result_var in env:
                line.append(f"{piece.source} = {render_value(env[piece.result_var])}")
            else:
                line.append(piece.source)
        if "".join(line).strip():
            current.append("".join(line))
    segments.append("\n".join(part for part in current if part.strip()))

    answer = source.answer
    if not segments[-1].rstrip().endswith(answer):
        segments[-1] = f"{segments[-1]}\n{answer}".strip()

    provenance = {"source": source.source, "qa_id": source.qa_id}
    return CoMSample(
        sample_id=sample_id,
        images=tuple(image_refs),
        question=source.question,
        segments=tuple(segments),
        answer=answer,
        provenance=provenance,
    )
