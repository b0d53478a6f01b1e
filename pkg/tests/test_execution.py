import random
from fractions import Fraction

import numpy as np
import pytest

from comforge.errors import DegenerateRegion, ExpressionError, TooFewPoints
from comforge.execution import (
    bicubic_resample,
    box_iou,
    default_zoom_ratio,
    exec_calculate,
    exec_counting,
    exec_crop_zoomin,
    exec_line,
)
from comforge.images import ImageBuffer, constant_image, denormalize_box
from comforge.values import Box, BoxList


# ---------------------------------------------------------------------------
# scalar oracle: direct per-pixel evaluation of the cubic kernel, written
# independently of the vectorized path
# ---------------------------------------------------------------------------

def oracle_kernel(x):
    x = abs(x)
    if x <= 1.0:
        return 1.5 * x**3 - 2.5 * x**2 + 1.0
    if x < 2.0:
        return -0.5 * x**3 + 2.5 * x**2 - 4.0 * x + 2.0
    return 0.0


def oracle_bicubic(pixels, out_w, out_h):
    in_h, in_w, channels = pixels.shape
    out = np.zeros((out_h, out_w, channels), dtype=np.float64)
    for oy in range(out_h):
        sy = (oy + 0.5) * in_h / out_h - 0.5
        by = int(np.floor(sy))
        for ox in range(out_w):
            sx = (ox + 0.5) * in_w / out_w - 0.5
            bx = int(np.floor(sx))
            for c in range(channels):
                acc = 0.0
                wsum = 0.0
                for ty in range(by - 1, by + 3):
                    wy = oracle_kernel(sy - ty)
                    cy = min(max(ty, 0), in_h - 1)
                    for tx in range(bx - 1, bx + 3):
                        wx = oracle_kernel(sx - tx)
                        cx = min(max(tx, 0), in_w - 1)
                        acc += wy * wx * float(pixels[cy, cx, c])
                        wsum += wy * wx
                out[oy, ox, c] = acc / wsum
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def test_denormalize_full_frame():
    assert denormalize_box(Box(0, 0, 999, 999), 500, 400) == (0, 0, 499, 399)


def test_denormalize_center_point_exact_arithmetic():
    # 500 * 999 // 999 is exactly 500; no float wobble
    assert denormalize_box(Box(500, 500, 500, 500), 1000, 1000) == (500, 500, 500, 500)


def test_denormalize_one_pixel_image():
    assert denormalize_box(Box(0, 0, 999, 999), 1, 1) == (0, 0, 0, 0)


def test_resample_identity_same_size():
    rng = np.random.default_rng(7)
    px = rng.integers(0, 256, size=(13, 9, 3), dtype=np.uint8)
    img = ImageBuffer(px, "t")
    out = bicubic_resample(img, 9, 13)
    assert np.array_equal(out.pixels, px)


def test_resample_constant_stays_constant():
    img = constant_image(10, 8, (37, 201, 90))
    for out_w, out_h in [(20, 16), (7, 5), (33, 2), (1, 1)]:
        out = bicubic_resample(img, out_w, out_h)
        assert out.pixels.shape == (out_h, out_w, 3)
        assert int(np.max(np.abs(out.pixels.astype(int) - [37, 201, 90]))) == 0


def test_resample_checkerboard_matches_oracle_exactly():
    px = np.zeros((2, 2, 3), dtype=np.uint8)
    px[0, 1] = px[1, 0] = 255
    img = ImageBuffer(px, "cb")
    out = bicubic_resample(img, 4, 4)
    expected = oracle_bicubic(px, 4, 4)
    assert np.array_equal(out.pixels, expected)


def test_resample_ramp_within_one_of_oracle():
    ramp = np.repeat(np.arange(8, dtype=np.uint8)[None, :] * 32, 8, axis=0)
    px = np.stack([ramp] * 3, axis=-1)
    img = ImageBuffer(px, "ramp")
    out = bicubic_resample(img, 16, 16)
    expected = oracle_bicubic(px, 16, 16)
    assert int(np.max(np.abs(out.pixels.astype(int) - expected.astype(int)))) <= 1


def test_resample_random_images_within_one_of_oracle():
    rng = np.random.default_rng(11)
    for _ in range(5):
        in_w, in_h = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        out_w, out_h = int(rng.integers(1, 17)), int(rng.integers(1, 17))
        px = rng.integers(0, 256, size=(in_h, in_w, 3), dtype=np.uint8)
        out = bicubic_resample(ImageBuffer(px, "r"), out_w, out_h)
        expected = oracle_bicubic(px, out_w, out_h)
        assert int(np.max(np.abs(out.pixels.astype(int) - expected.astype(int)))) <= 1


def test_crop_zoom_full_frame_ratio_two():
    img = constant_image(100, 100, (90, 90, 90), "g")
    out = exec_crop_zoomin(img, Box(0, 0, 999, 999), Fraction(2))
    assert (out.width, out.height) == (200, 200)
    assert int(np.max(np.abs(out.pixels.astype(int) - 90))) == 0


def test_crop_zoom_ratio_one_identity():
    rng = np.random.default_rng(3)
    px = rng.integers(0, 256, size=(40, 60, 3), dtype=np.uint8)
    img = ImageBuffer(px, "x")
    out = exec_crop_zoomin(img, Box(0, 0, 999, 999), Fraction(1))
    assert np.array_equal(out.pixels, px)


def test_crop_zoom_ident_scheme():
    img = constant_image(100, 80, ident="img03.png")
    out = exec_crop_zoomin(img, Box(100, 200, 500, 700), Fraction(2))
    assert out.ident == "img03.png|crop(100,200,500,700)x2"


def test_crop_zoom_rejects_nonpositive_ratio():
    img = constant_image(10, 10)
    with pytest.raises(DegenerateRegion):
        exec_crop_zoomin(img, Box(0, 0, 999, 999), Fraction(0))


def test_default_zoom_ratio_rules():
    assert default_zoom_ratio(50, 30, 200, 100) == Fraction(4)
    assert default_zoom_ratio(100, 50, 200, 100) == Fraction(2)
    assert default_zoom_ratio(200, 100, 200, 100) == Fraction(1)
    assert default_zoom_ratio(400, 100, 200, 100) == Fraction(1)  # never shrink


# ---------------------------------------------------------------------------
# line drawing; the diagonal case is checked against an integer line walk
# ---------------------------------------------------------------------------

def test_line_two_identical_points_single_dot():
    img = constant_image(50, 50, (0, 0, 0))
    out = exec_line(img, [(500, 500), (500, 500)], width=1)
    colored = np.argwhere((out.pixels == [255, 0, 0]).all(axis=-1))
    assert colored.tolist() == [[24, 24]]


def test_line_diagonal_covers_every_diagonal_pixel():
    img = constant_image(100, 100, (0, 0, 0))
    out = exec_line(img, [(0, 0), (999, 999)])
    # oracle: an integer walk of the main diagonal
    for i in range(100):
        assert (out.pixels[i, i] == [255, 0, 0]).all(), f"pixel ({i},{i}) not drawn"


def test_line_input_untouched_and_too_few_points():
    img = constant_image(20, 20, (1, 2, 3))
    before = img.pixels.copy()
    exec_line(img, [(0, 0), (999, 0)])
    assert np.array_equal(img.pixels, before)
    with pytest.raises(TooFewPoints):
        exec_line(img, [(1, 1)])


# ---------------------------------------------------------------------------
# counting
# ---------------------------------------------------------------------------

def test_counting_empty_and_disjoint():
    assert exec_counting(BoxList(())).value == 0
    boxes = BoxList((Box(0, 0, 10, 10), Box(100, 100, 200, 200), Box(300, 300, 400, 400)))
    assert exec_counting(boxes).value == 3


def test_counting_merges_heavy_overlap():
    # identical x extents, y extents 0..100 vs 0..95:
    # intersection 100*95 = 9500, union 100*100 + 100*95 - 9500 = 10000
    a = Box(0, 0, 100, 100)
    b = Box(0, 0, 100, 95)
    assert box_iou(a, b) == pytest.approx(0.95)
    assert exec_counting(BoxList((a, b)), dedup_iou=0.9).value == 1
    assert exec_counting(BoxList((a, b)), dedup_iou=0.96).value == 2


def test_counting_permutation_invariant():
    rng = random.Random(5)
    boxes = []
    for _ in range(12):
        x0 = rng.randint(0, 800)
        y0 = rng.randint(0, 800)
        boxes.append(Box(x0, y0, x0 + rng.randint(5, 150), y0 + rng.randint(5, 150)))
    reference = exec_counting(BoxList(tuple(boxes))).value
    for _ in range(10):
        rng.shuffle(boxes)
        assert exec_counting(BoxList(tuple(boxes))).value == reference


# ---------------------------------------------------------------------------
# calculate; oracle is a naive recursive-descent evaluator over Fractions
# ---------------------------------------------------------------------------

def oracle_eval(expr):
    tokens = []
    i = 0
    while i < len(expr):
        c = expr[i]
        if c.isspace():
            i += 1
        elif c.isdigit() or c == ".":
            j = i
            while j < len(expr) and (expr[j].isdigit() or expr[j] == "."):
                j += 1
            tokens.append(expr[i:j])
            i = j
        else:
            tokens.append({"×": "*", "÷": "/", "−": "-"}.get(c, c))
            i += 1

    pos = [0]

    def parse_expression():
        value = parse_term()
        while pos[0] < len(tokens) and tokens[pos[0]] in "+-":
            op = tokens[pos[0]]
            pos[0] += 1
            rhs = parse_term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def parse_term():
        value = parse_factor()
        while pos[0] < len(tokens) and tokens[pos[0]] in "*/":
            op = tokens[pos[0]]
            pos[0] += 1
            rhs = parse_factor()
            if op == "*":
                value = value * rhs
            else:
                if rhs == 0:
                    raise ZeroDivisionError
                value = value / rhs
        return value

    def parse_factor():
        tok = tokens[pos[0]]
        if tok == "-":
            pos[0] += 1
            return -parse_factor()
        if tok == "+":
            pos[0] += 1
            return parse_factor()
        if tok == "(":
            pos[0] += 1
            value = parse_expression()
            assert tokens[pos[0]] == ")"
            pos[0] += 1
            return value
        pos[0] += 1
        if "." in tok:
            whole, _, frac = tok.partition(".")
            return Fraction(int(whole or 0) * 10 ** len(frac) + int(frac or 0), 10 ** len(frac))
        return Fraction(int(tok))

    result = parse_expression()
    assert pos[0] == len(tokens)
    return result


def test_calculate_precedence():
    assert exec_calculate("3+4*2").value == 11


def test_calculate_parens_and_zero():
    assert exec_calculate("(7-7)/3").value == 0


def test_calculate_unicode_operators():
    assert exec_calculate("6 × 8").value == 48
    assert exec_calculate("10 ÷ 4").value == Fraction(5, 2)


def test_calculate_decimals_exact():
    assert exec_calculate("0.1 + 0.2").value == Fraction(3, 10)


def test_calculate_division_by_zero():
    with pytest.raises(ZeroDivisionError):
        exec_calculate("1/(2-2)")


def test_calculate_syntax_errors():
    for bad in ["", "3+", "(1+2", "2**3", "abc", "1..2"]:
        with pytest.raises(ExpressionError):
            exec_calculate(bad)


def random_expr(rng, depth=0):
    if depth > 3 or rng.random() < 0.35:
        if rng.random() < 0.25:
            return f"{rng.randint(0, 99)}.{rng.randint(0, 99):02d}"
        return str(rng.randint(0, 99))
    left = random_expr(rng, depth + 1)
    right = random_expr(rng, depth + 1)
    op = rng.choice(["+", "-", "*", "/", "×", "÷"])
    text = f"{left} {op} {right}"
    if rng.random() < 0.4:
        text = f"({text})"
    if rng.random() < 0.1:
        text = f"-{text}" if text.startswith("(") else text
    return text


def test_calculate_matches_recursive_descent_oracle():
    rng = random.Random(991)
    checked = 0
    while checked < 500:
        expr = random_expr(rng)
        try:
            expected = oracle_eval(expr)
        except ZeroDivisionError:
            with pytest.raises(ZeroDivisionError):
                exec_calculate(expr)
            checked += 1
            continue
        assert exec_calculate(expr).value == expected
        checked += 1
