"""RGB image buffers with stable identifiers, plus PNG I/O.

Pixels live in a (height, width, 3) uint8 array with value semantics: every
operation returns a new buffer. The identifier travels with the buffer so
derived images (crops, overlays) stay addressable by mock annotators and
dataset records.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ImageDecodeError
from .values import COORD_MAX, Box


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    pixels: np.ndarray  # (h, w, 3) uint8
    ident: str

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) pixels, got {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {self.pixels.dtype}")
        if self.height < 1 or self.width < 1:
            raise ValueError("image must be at least 1x1")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def with_ident(self, ident: str) -> "ImageBuffer":
        return ImageBuffer(self.pixels, ident)


def constant_image(width: int, height: int, rgb=(128, 128, 128), ident="constant") -> ImageBuffer:
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[:, :] = np.asarray(rgb, dtype=np.uint8)
    return ImageBuffer(px, ident)


def load_png(path, ident=None) -> ImageBuffer:
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            px = np.asarray(rgb, dtype=np.uint8)
    except OSError as exc:
        raise ImageDecodeError(f"cannot read image {path}: {exc}") from exc
    return ImageBuffer(px, ident if ident is not None else str(path))


def save_png(image: ImageBuffer, path) -> None:
    Image.fromarray(image.pixels, mode="RGB").save(path, format="PNG")


def encode_png_bytes(image: ImageBuffer) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png_bytes(data: bytes, ident: str) -> ImageBuffer:
    try:
        with Image.open(io.BytesIO(data)) as im:
            px = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise ImageDecodeError(f"cannot decode image bytes: {exc}") from exc
    return ImageBuffer(px, ident)


def denormalize_box(box: Box, width: int, height: int) -> tuple[int, int, int, int]:
    """Map a 0..999 normalized box to inclusive pixel corners.

    Each coordinate maps as floor(c / 999 * (extent - 1)), computed in exact
    integer arithmetic so boundary values do not wobble with float rounding.
    """
    px0 = box.x0 * (width - 1) // COORD_MAX
    px1 = box.x1 * (width - 1) // COORD_MAX
    py0 = box.y0 * (height - 1) // COORD_MAX
    py1 = box.y1 * (height - 1) // COORD_MAX
    return px0, py0, px1, py1


def denormalize_point(x: int, y: int, width: int, height: int) -> tuple[int, int]:
    return x * (width - 1) // COORD_MAX, y * (height - 1) // COORD_MAX
