"""Deterministic manipulation executors that need no external model.

Covers crop-and-zoom with bicubic resampling, polyline drawing, box
counting with IoU deduplication, and exact rational arithmetic for the
calculate manipulation.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import DegenerateRegion, ExpressionError, TooFewPoints
from .images import ImageBuffer, denormalize_box, denormalize_point
from .values import Box, BoxList, Num

DEFAULT_LINE_COLOR = (255, 0, 0)
DEFAULT_LINE_WIDTH = 2
DEFAULT_DEDUP_IOU = 0.9
MAX_DEFAULT_ZOOM = Fraction(4)


def _keys_kernel(x: np.ndarray) -> np.ndarray:
    """Cubic convolution kernel with a = -0.5 (the Catmull-Rom flavor)."""
    ax = np.abs(x)
    out = np.zeros_like(ax)
    near = ax <= 1.0
    far = (ax > 1.0) & (ax < 2.0)
    out[near] = 1.5 * ax[near] ** 3 - 2.5 * ax[near] ** 2 + 1.0
    out[far] = -0.5 * (ax[far] ** 3 - 5.0 * ax[far] ** 2 + 8.0 * ax[far] - 4.0)
    return out


def _axis_weights(in_len: int, out_len: int):
    """Tap indices (out_len, 4) and unit-normalized weights for one axis.

    Output pixel centers map to source coordinates via the half-pixel
    convention; tap coordinates are clamped to the image so samples never
    leave the source.
    """
    dst = np.arange(out_len, dtype=np.float64)
    src = (dst + 0.5) * (in_len / out_len) - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    offsets = np.array([-1, 0, 1, 2], dtype=np.int64)
    taps = base[:, None] + offsets[None, :]
    weights = _keys_kernel(frac[:, None] - offsets[None, :].astype(np.float64))
    weights /= weights.sum(axis=1, keepdims=True)
    taps = np.clip(taps, 0, in_len - 1)
    return taps, weights


def bicubic_resample(image: ImageBuffer, out_w: int, out_h: int) -> ImageBuffer:
    """Separable bicubic resampling; output clamped back to 8-bit range."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be >= 1, got {out_w}x{out_h}")
    px = image.pixels.astype(np.float64)
    taps_y, w_y = _axis_weights(image.height, out_h)
    taps_x, w_x = _axis_weights(image.width, out_w)
    # vertical pass: (out_h, 4, w, c) tap stack collapsed over the 4 weights
    rows = np.einsum("ot,otwc->owc", w_y, px[taps_y, :, :])
    # horizontal pass: (out_h, out_w, 4, c) collapsed the same way
    out = np.einsum("ot,hotc->hoc", w_x, rows[:, taps_x, :])
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return ImageBuffer(out, f"{image.ident}|resize({out_w}x{out_h})")


def default_zoom_ratio(crop_w: int, crop_h: int, orig_w: int, orig_h: int) -> Fraction:
    """Grow the crop so its longer side reaches the original's longer side,
    never shrinking and never beyond 4x."""
    ratio = Fraction(max(orig_w, orig_h), max(crop_w, crop_h))
    return min(MAX_DEFAULT_ZOOM, max(Fraction(1), ratio))


def exec_crop_zoomin(image: ImageBuffer, box: Box, ratio: Fraction | None = None) -> ImageBuffer:
    """Crop the box (inclusive pixel corners) and amplify it bicubically."""
    px0, py0, px1, py1 = denormalize_box(box, image.width, image.height)
    w = px1 - px0 + 1
    h = py1 - py0 + 1
    if w < 1 or h < 1:
        raise DegenerateRegion(f"crop of box {box.as_tuple()} has no pixels")
    if ratio is None:
        ratio = default_zoom_ratio(w, h, image.width, image.height)
    else:
        ratio = Fraction(ratio)
        if ratio <= 0:
            raise DegenerateRegion(f"zoom ratio must be positive, got {ratio}")
    crop = ImageBuffer(np.ascontiguousarray(image.pixels[py0 : py1 + 1, px0 : px1 + 1]), image.ident)
    # round half up, exactly, so output sizes do not depend on float ties
    out_w = max(1, int(w * ratio + Fraction(1, 2)))
    out_h = max(1, int(h * ratio + Fraction(1, 2)))
    ratio_txt = str(ratio)
    ident = f"{image.ident}|crop({box.x0},{box.y0},{box.x1},{box.y1})x{ratio_txt}"
    return bicubic_resample(crop, out_w, out_h).with_ident(ident)


def exec_line(image: ImageBuffer, points, color=DEFAULT_LINE_COLOR, width=DEFAULT_LINE_WIDTH) -> ImageBuffer:
    """Draw straight segments between consecutive normalized points.

    Returns a new buffer; the input is untouched. Each walked pixel is
    painted as a width x width square anchored at the pixel, clipped to the
    image.
    """
    pts = list(points)
    if len(pts) < 2:
        raise TooFewPoints(f"need at least 2 points, got {len(pts)}")
    out = image.pixels.copy()
    h, w = out.shape[:2]
    rgb = np.asarray(color, dtype=np.uint8)

    def paint(x, y):
        out[max(0, y) : min(h, y + width), max(0, x) : min(w, x + width)] = rgb

    pixel_pts = [denormalize_point(x, y, w, h) for x, y in pts]
    for (x0, y0), (x1, y1) in zip(pixel_pts, pixel_pts[1:]):
        dx = abs(x1 - x0)
        dy = -abs(y1 - y0)
        sx = 1 if x0 < x1 else -1
        sy = 1 if y0 < y1 else -1
        err = dx + dy
        x, y = x0, y0
        while True:
            paint(x, y)
            if x == x1 and y == y1:
                break
            e2 = 2 * err
            if e2 >= dy:
                err += dy
                x += sx
            if e2 <= dx:
                err += dx
                y += sy
    pts_txt = ";".join(f"{x},{y}" for x, y in pts)
    return ImageBuffer(out, f"{image.ident}|line({pts_txt})")


def box_iou(a: Box, b: Box) -> float:
    ix0 = max(a.x0, b.x0)
    iy0 = max(a.y0, b.y0)
    ix1 = min(a.x1, b.x1)
    iy1 = min(a.y1, b.y1)
    iw = max(0, ix1 - ix0)
    ih = max(0, iy1 - iy0)
    inter = iw * ih
    if inter == 0:
        return 0.0
    area_a = (a.x1 - a.x0) * (a.y1 - a.y0)
    area_b = (b.x1 - b.x0) * (b.y1 - b.y0)
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def exec_counting(boxes: BoxList, dedup_iou: float = DEFAULT_DEDUP_IOU) -> Num:
    """Count boxes after merging near-duplicates.

    Overlap at or above the threshold links two boxes; connected groups
    count once, which keeps the result independent of input order.
    """
    items = list(boxes.boxes)
    n = len(items)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if box_iou(items[i], items[j]) >= dedup_iou:
                parent[find(i)] = find(j)
    groups = {find(i) for i in range(n)}
    return Num.of(len(groups))


# --- exact arithmetic ------------------------------------------------------

_OPS = {"+", "-", "*", "/"}
_ALIASES = {"×": "*", "÷": "/", "−": "-", "–": "-"}


def _tokenize(expr: str):
    tokens = []
    i = 0
    n = len(expr)
    while i < n:
        c = _ALIASES.get(expr[i], expr[i])
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            seen_dot = False
            while j < n and (expr[j].isdigit() or (expr[j] == "." and not seen_dot)):
                seen_dot = seen_dot or expr[j] == "."
                j += 1
            literal = expr[i:j]
            if literal == ".":
                raise ExpressionError(f"bad number at offset {i}")
            tokens.append(("num", _decimal_fraction(literal)))
            i = j
            continue
        if c in _OPS or c in "()":
            tokens.append((c, None))
            i += 1
            continue
        raise ExpressionError(f"unexpected character {expr[i]!r} at offset {i}")
    return tokens


def _decimal_fraction(literal: str) -> Fraction:
    if "." in literal:
        whole, _, frac = literal.partition(".")
        whole = whole or "0"
        if not frac:
            return Fraction(int(whole))
        return Fraction(int(whole) * 10 ** len(frac) + int(frac), 10 ** len(frac))
    return Fraction(int(literal))


class _Evaluator:
    """Precedence-climbing evaluator over Fractions."""

    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos][0] if self.pos < len(self.tokens) else None

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def parse_expr(self, min_prec=0) -> Fraction:
        left = self.parse_atom()
        while True:
            op = self.peek()
            prec = {"+": 1, "-": 1, "*": 2, "/": 2}.get(op)
            if prec is None or prec < min_prec:
                return left
            self.take()
            right = self.parse_expr(prec + 1)
            if op == "+":
                left = left + right
            elif op == "-":
                left = left - right
            elif op == "*":
                left = left * right
            else:
                if right == 0:
                    raise ZeroDivisionError("division by zero in expression")
                left = left / right

    def parse_atom(self) -> Fraction:
        kind = self.peek()
        if kind == "num":
            return self.take()[1]
        if kind == "-":
            self.take()
            return -self.parse_atom()
        if kind == "+":
            self.take()
            return self.parse_atom()
        if kind == "(":
            self.take()
            value = self.parse_expr()
            if self.peek() != ")":
                raise ExpressionError("missing closing parenthesis")
            self.take()
            return value
        raise ExpressionError(f"unexpected token {kind!r}")


def exec_calculate(expr: str) -> Num:
    """Evaluate an arithmetic expression exactly over rationals.

    Division by zero raises ZeroDivisionError rather than producing an
    infinity.
    """
    tokens = _tokenize(expr)
    if not tokens:
        raise ExpressionError("empty expression")
    ev = _Evaluator(tokens)
    value = ev.parse_expr()
    if ev.pos != len(tokens):
        raise ExpressionError(f"trailing tokens after position {ev.pos}")
    return Num(value)
