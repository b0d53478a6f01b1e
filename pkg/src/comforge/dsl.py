"""Parser, validator, and printer for manipulation-annotated reasoning steps.

A step is free-form text that may embed manipulation calls of the form

    NAME(arg, arg, ...) -> result_var

where NAME is an identifier (case-insensitive; unknown names become custom
manipulations), arguments are comma-separated literal phrases or references
to result variables of earlier calls, and the arrow is either ``->`` or the
Unicode ``→``. Text outside calls is preserved verbatim, so parsing and
rendering round-trip exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

from .errors import ChainParseError, EmptyArgument, MalformedCall
from .values import VAR_PREFIX_KINDS, KIND_BOX, KIND_IMAGE, KIND_NUM, KIND_TEXT

BUILTIN_NAMES = (
    "OCR",
    "GROUNDING",
    "COUNTING",
    "CALCULATE",
    "CROP_AND_ZOOMIN",
    "LINE",
)

# result kind each built-in manipulation declares
SIGNATURES = {
    "OCR": KIND_TEXT,
    "GROUNDING": KIND_BOX,
    "COUNTING": KIND_NUM,
    "CALCULATE": KIND_NUM,
    "CROP_AND_ZOOMIN": KIND_IMAGE,
    "LINE": KIND_IMAGE,
}

_CUSTOM_RE = re.compile(r"[A-Z][A-Z0-9_]*\Z")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_VAR_REF_RE = re.compile(r"(bbx|txt|num|img|pts)_[0-9]+\Z")
_RESULT_VAR_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_ANSWER_MARKER_RE = re.compile(r"^\s*(?:final\s+)?answer\s*[:=]\s*(.+?)\s*$", re.IGNORECASE)

ARROWS = ("->", "→")


@dataclass(frozen=True)
class ManipulationName:
    """Normalized manipulation name; the six built-ins plus custom names."""

    name: str

    def __post_init__(self):
        if not _CUSTOM_RE.match(self.name):
            raise ValueError(f"bad manipulation name: {self.name!r}")

    @classmethod
    def of(cls, raw: str) -> "ManipulationName":
        return cls(raw.strip().upper())

    @property
    def is_builtin(self) -> bool:
        return self.name in BUILTIN_NAMES

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Literal:
    text: str


@dataclass(frozen=True)
class VarRef:
    var: str


Arg = Union[Literal, VarRef]


def classify_arg(raw: str) -> Arg:
    """A full-token variable reference is a VarRef; everything else a literal."""
    stripped = raw.strip()
    if _VAR_REF_RE.match(stripped):
        return VarRef(stripped)
    return Literal(stripped)


@dataclass(frozen=True)
class ManipulationCall:
    name: ManipulationName
    args: tuple
    result_var: str
    declared_result_kind: Optional[str]
    source: str = ""  # exact substring the call was parsed from

    def render(self) -> str:
        """Canonical form (not necessarily the original surface text)."""
        rendered = ", ".join(a.var if isinstance(a, VarRef) else a.text for a in self.args)
        return f"{self.name}({rendered})->{self.result_var}"


@dataclass(frozen=True)
class Step:
    raw_text: str
    calls: tuple[ManipulationCall, ...] = ()
    spans: tuple[tuple[int, int], ...] = ()

    def prose_pieces(self):
        """Alternating text around the call spans: [prose, call, prose, ...]."""
        pieces = []
        cursor = 0
        for (start, end), call in zip(self.spans, self.calls):
            pieces.append(("prose", self.raw_text[cursor:start]))
            pieces.append(("call", call))
            cursor = end
        pieces.append(("prose", self.raw_text[cursor:]))
        return pieces


@dataclass(frozen=True)
class Chain:
    steps: tuple[Step, ...]
    final_answer: Optional[str] = None

    def calls(self):
        for step_idx, step in enumerate(self.steps):
            for call_idx, call in enumerate(step.calls):
                yield step_idx, call_idx, call

    def manipulation_names(self) -> set[str]:
        return {call.name.name for _, _, call in self.calls()}

    def answer_candidate(self) -> Optional[str]:
        """final_answer when set, else the trailing text of the last step."""
        if self.final_answer is not None:
            return self.final_answer
        if not self.steps:
            return None
        last = self.steps[-1]
        tail_start = last.spans[-1][1] if last.spans else 0
        tail = last.raw_text[tail_start:].strip()
        return tail or None


@dataclass(frozen=True)
class Violation:
    code: str  # undefined-variable | duplicate-definition | kind-mismatch
    var: str
    step_index: int
    detail: str = ""


def declared_kind_of(result_var: str) -> Optional[str]:
    head, _, tail = result_var.partition("_")
    if tail.isdigit() and head in VAR_PREFIX_KINDS:
        return VAR_PREFIX_KINDS[head]
    return None


def _find_balanced(text: str, open_idx: int) -> int:
    """Index just past the parenthesis group opening at open_idx, or -1."""
    depth = 0
    for i in range(open_idx, len(text)):
        c = text[i]
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0:
                return i + 1
    return -1


def _split_args(body: str) -> list[str]:
    """Split on top-level commas only."""
    parts = []
    depth = 0
    current = []
    for c in body:
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
        if c == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(c)
    parts.append("".join(current))
    return parts


def parse_step(text: str) -> Step:
    """Extract every manipulation call from one step of reasoning text.

    Raises MalformedCall for an unbalanced call or a dangling arrow, and
    EmptyArgument for calls with an empty argument slot. Any other text is
    kept verbatim as prose.
    """
    calls = []
    spans = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _NAME_RE.search(text, pos)
        if m is None:
            break
        name_start, name_end = m.start(), m.end()
        if name_end >= n or text[name_end] != "(":
            pos = name_end
            continue
        close = _find_balanced(text, name_end)
        if close == -1:
            raise MalformedCall(
                f"unbalanced parentheses after {text[name_start:name_end]!r} at offset {name_start}"
            )
        # optional whitespace, then an arrow, then the result variable
        cursor = close
        while cursor < n and text[cursor] in " \t":
            cursor += 1
        arrow = next((a for a in ARROWS if text.startswith(a, cursor)), None)
        if arrow is None:
            # plain parenthesized prose; rescan inside the parentheses
            pos = name_end
            continue
        cursor += len(arrow)
        while cursor < n and text[cursor] in " \t":
            cursor += 1
        var_match = _RESULT_VAR_RE.match(text, cursor)
        if var_match is None:
            raise MalformedCall(
                f"missing result variable after arrow at offset {cursor}"
            )
        body = text[name_end + 1 : close - 1]
        raw_args = _split_args(body)
        if len(raw_args) == 1 and not raw_args[0].strip():
            raise EmptyArgument(f"empty argument list at offset {name_start}")
        if any(not a.strip() for a in raw_args):
            raise EmptyArgument(f"empty argument in call at offset {name_start}")
        name = ManipulationName.of(text[name_start:name_end])
        result_var = var_match.group(0)
        call = ManipulationCall(
            name=name,
            args=tuple(classify_arg(a) for a in raw_args),
            result_var=result_var,
            declared_result_kind=declared_kind_of(result_var),
            source=text[name_start : var_match.end()],
        )
        calls.append(call)
        spans.append((name_start, var_match.end()))
        pos = var_match.end()
    return Step(raw_text=text, calls=tuple(calls), spans=tuple(spans))


def render_step(step: Step) -> str:
    """Inverse of parse_step: stitch prose and call sources back together."""
    out = []
    for kind, piece in step.prose_pieces():
        out.append(piece.source if kind == "call" else piece)
    return "".join(out)


def parse_chain(text: str) -> Chain:
    """Parse a multi-line completion into a chain, one step per nonblank line.

    A line of the form ``Answer: ...`` sets the chain's final answer (the
    last such line wins) and is kept as a regular step.
    """
    steps = []
    final_answer = None
    try:
        for line in text.splitlines():
            if not line.strip():
                continue
            steps.append(parse_step(line))
            marker = _ANSWER_MARKER_RE.match(line)
            if marker:
                final_answer = marker.group(1)
    except (MalformedCall, EmptyArgument) as exc:
        raise ChainParseError(str(exc), raw_text=text) from exc
    return Chain(steps=tuple(steps), final_answer=final_answer)


def validate_chain(chain: Chain) -> list[Violation]:
    """Check def-before-use, unique result variables, and declared kinds.

    Violations are data; an empty list means the chain is well-formed.
    References may use results of earlier calls within the same step.
    """
    violations = []
    defined: dict[str, int] = {}
    for step_idx, _, call in chain.calls():
        for arg in call.args:
            if isinstance(arg, VarRef) and arg.var not in defined:
                violations.append(
                    Violation("undefined-variable", arg.var, step_idx)
                )
        if call.result_var in defined:
            violations.append(
                Violation("duplicate-definition", call.result_var, step_idx)
            )
        else:
            defined[call.result_var] = step_idx
        expected = SIGNATURES.get(call.name.name)
        declared = call.declared_result_kind
        if expected is not None and declared is not None and declared != expected:
            violations.append(
                Violation(
                    "kind-mismatch",
                    call.result_var,
                    step_idx,
                    detail=f"{call.name} yields {expected}, variable declares {declared}",
                )
            )
    return violations
