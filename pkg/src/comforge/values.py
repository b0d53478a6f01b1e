"""Typed values produced by manipulations: texts, boxes, numbers, images, points.

Box and point coordinates are integers normalized to the 0..999 grid,
independent of the underlying image resolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

COORD_MAX = 999


@dataclass(frozen=True)
class Box:
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 <= self.x1 <= COORD_MAX):
            raise ValueError(f"bad box x range: {self.x0}..{self.x1}")
        if not (0 <= self.y0 <= self.y1 <= COORD_MAX):
            raise ValueError(f"bad box y range: {self.y0}..{self.y1}")

    def as_tuple(self):
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class Text:
    text: str


@dataclass(frozen=True)
class Num:
    value: Fraction

    @classmethod
    def of(cls, value) -> "Num":
        return cls(Fraction(value))


@dataclass(frozen=True)
class BoxList:
    boxes: tuple[Box, ...]

    def __len__(self):
        return len(self.boxes)


@dataclass(frozen=True)
class Points:
    points: tuple[tuple[int, int], ...]

    def __post_init__(self):
        for x, y in self.points:
            if not (0 <= x <= COORD_MAX and 0 <= y <= COORD_MAX):
                raise ValueError(f"point out of range: ({x}, {y})")


@dataclass(frozen=True)
class ImageRef:
    """Handle to an image: a stable identifier, not pixel data.

    Derived images (crops, line overlays) get identifiers built from the
    parent identifier plus the operation, so mock annotators and dataset
    records can refer to them deterministically.
    """

    ident: str


Value = Union[Text, Box, BoxList, Num, ImageRef, Points]

# tag names used for declared result kinds (derived from variable prefixes)
KIND_TEXT = "text"
KIND_BOX = "box"
KIND_NUM = "num"
KIND_IMAGE = "image"
KIND_POINTS = "points"

VAR_PREFIX_KINDS = {
    "txt": KIND_TEXT,
    "bbx": KIND_BOX,
    "num": KIND_NUM,
    "img": KIND_IMAGE,
    "pts": KIND_POINTS,
}


def render_num(value: Fraction) -> str:
    """Canonical text for a rational: integer, finite decimal, or p/q."""
    if value.denominator == 1:
        return str(value.numerator)
    # finite decimal expansion when the denominator is 2^a * 5^b
    den = value.denominator
    twos = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    fives = 0
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den == 1:
        shift = max(twos, fives)
        scaled = value.numerator * 10**shift // value.denominator
        sign = "-" if scaled < 0 else ""
        digits = str(abs(scaled)).rjust(shift + 1, "0")
        return f"{sign}{digits[:-shift]}.{digits[-shift:]}"
    return f"{value.numerator}/{value.denominator}"


def render_value(value: Value) -> str:
    """Fixed printer used everywhere a value is embedded in text."""
    if isinstance(value, Text):
        return value.text
    if isinstance(value, Box):
        return f"({value.x0},{value.y0},{value.x1},{value.y1})"
    if isinstance(value, BoxList):
        return "[" + ";".join(render_value(b) for b in value.boxes) + "]"
    if isinstance(value, Num):
        return render_num(value.value)
    if isinstance(value, ImageRef):
        return value.ident
    if isinstance(value, Points):
        return "[" + ";".join(f"({x},{y})" for x, y in value.points) + "]"
    raise TypeError(f"not a value: {value!r}")


def kind_of(value: Value) -> str:
    if isinstance(value, Text):
        return KIND_TEXT
    if isinstance(value, (Box, BoxList)):
        return KIND_BOX
    if isinstance(value, Num):
        return KIND_NUM
    if isinstance(value, ImageRef):
        return KIND_IMAGE
    if isinstance(value, Points):
        return KIND_POINTS
    raise TypeError(f"not a value: {value!r}")
