"""Core geometry and document types shared by every pipeline stage.

Coordinates are integer pixels. Boxes follow the width = x2 - x1 convention:
the pixel column x2 is *not* part of the box. Fractional coordinates coming
from detectors are rounded outward (floor on x1/y1, ceil on x2/y2) so crops
never lose glyph pixels.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .errors import UsageError, ValidationError


@dataclass(frozen=True, order=True)
class BBox:
    """Axis-aligned rectangle [x1, x2) x [y1, y2) in image pixel coordinates."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not isinstance(v, int):
                raise ValidationError(f"box coordinates must be integers, got {v!r}")
            if v < 0:
                raise ValidationError(f"negative box coordinate in {self.as_list()}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValidationError(f"inverted box {self.as_list()}")

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_list(self) -> list[int]:
        return [self.x1, self.y1, self.x2, self.y2]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "BBox":
        if len(values) != 4:
            raise ValidationError(f"box needs 4 values, got {len(values)}")
        return cls.round_outward(*values)

    @classmethod
    def round_outward(cls, x1: float, y1: float, x2: float, y2: float) -> "BBox":
        """Round fractional coordinates so the box never shrinks."""
        return cls(
            max(0, math.floor(x1)),
            max(0, math.floor(y1)),
            max(0, math.ceil(x2)),
            max(0, math.ceil(y2)),
        )

    def within(self, width: int, height: int) -> bool:
        return self.x2 <= width and self.y2 <= height

    def clip(self, width: int, height: int) -> "BBox":
        return BBox(
            min(self.x1, width),
            min(self.y1, height),
            min(self.x2, width),
            min(self.y2, height),
        )

    def contains(self, other: "BBox") -> bool:
        return (
            self.x1 <= other.x1
            and self.y1 <= other.y1
            and other.x2 <= self.x2
            and other.y2 <= self.y2
        )

    def translate(self, dx: int, dy: int) -> "BBox":
        return BBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)


def envelope(boxes: Sequence[BBox]) -> BBox:
    """Minimal axis-aligned box containing every input box."""
    if not boxes:
        raise UsageError("envelope() needs at least one box")
    return BBox(
        min(b.x1 for b in boxes),
        min(b.y1 for b in boxes),
        max(b.x2 for b in boxes),
        max(b.y2 for b in boxes),
    )


Point = tuple[float, float]


@dataclass(frozen=True)
class Quad:
    """Four corner points, clockwise from top-left."""

    points: tuple[Point, Point, Point, Point]

    def __post_init__(self):
        if len(self.points) != 4:
            raise ValidationError("quad needs exactly 4 points")
        if abs(self._signed_area()) < 1e-9:
            raise ValidationError(f"degenerate quad (zero area): {self.points}")
        if self._self_intersects():
            raise ValidationError(f"self-intersecting quad: {self.points}")

    def _signed_area(self) -> float:
        pts = self.points
        total = 0.0
        for i in range(4):
            x0, y0 = pts[i]
            x1, y1 = pts[(i + 1) % 4]
            total += x0 * y1 - x1 * y0
        return total / 2.0

    def _self_intersects(self) -> bool:
        # A simple quad is non-simple iff one pair of opposite edges crosses.
        p = self.points
        return _segments_cross(p[0], p[1], p[2], p[3]) or _segments_cross(
            p[1], p[2], p[3], p[0]
        )


def _segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool:
    def orient(p: Point, q: Point, r: Point) -> float:
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    return o1 * o2 < 0 and o3 * o4 < 0


def quad_to_bbox(quad: Quad) -> BBox:
    """Axis-aligned envelope of a quad's corners, rounded outward."""
    xs = [p[0] for p in quad.points]
    ys = [p[1] for p in quad.points]
    return BBox.round_outward(min(xs), min(ys), max(xs), max(ys))


@dataclass(frozen=True, eq=False)
class DocumentImage:
    """An 8-bit RGB raster with an opaque document id.

    The pixel buffer is frozen after construction so instances can be shared
    across worker threads.
    """

    doc_id: str
    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
            raise ValidationError(
                f"pixels must be uint8 with shape (H, W, 3), got "
                f"{arr.dtype} {arr.shape}"
            )
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValidationError("image must have positive width and height")
        if arr.flags.writeable:
            arr = arr.copy()
            arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @classmethod
    def blank(
        cls, doc_id: str, width: int, height: int, color=(255, 255, 255)
    ) -> "DocumentImage":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:, :] = color
        return cls(doc_id, arr)

    @classmethod
    def from_png_bytes(cls, data: bytes, doc_id: str) -> "DocumentImage":
        with Image.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        return cls(doc_id, arr)

    @classmethod
    def from_png(cls, path: str | Path, doc_id: str | None = None) -> "DocumentImage":
        path = Path(path)
        return cls.from_png_bytes(path.read_bytes(), doc_id or path.stem)

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.pixels).save(buf, format="PNG")
        return buf.getvalue()

    def save_png(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_png_bytes())

    def with_pixels(self, pixels: np.ndarray) -> "DocumentImage":
        return DocumentImage(self.doc_id, pixels)


def crop(image: DocumentImage, box: BBox) -> np.ndarray:
    """Pixels of the boxed sub-rectangle.

    Raises on out-of-bounds boxes instead of clamping; whether to clamp is the
    caller's decision.
    """
    if not box.within(image.width, image.height):
        raise ValidationError(
            f"box {box.as_list()} exceeds image bounds "
            f"{image.width}x{image.height} for doc {image.doc_id!r}"
        )
    out = np.array(image.pixels[box.y1 : box.y2, box.x1 : box.x2])
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class DetectedRegion:
    """One detected text segment: a dense index, its box, and the crop pixels.

    ``crop`` may be None for regions built from annotation files rather than
    an image (e.g. OCR token lists used only for gold-box derivation).
    """

    region_id: int
    box: BBox
    crop: np.ndarray | None = None

    def __post_init__(self):
        if self.region_id < 0:
            raise ValidationError(f"region_id must be non-negative: {self.region_id}")
        if self.crop is not None:
            h, w = self.crop.shape[:2]
            if (w, h) != (self.box.width, self.box.height):
                raise ValidationError(
                    f"crop shape {w}x{h} does not match box "
                    f"{self.box.width}x{self.box.height}"
                )


@dataclass(frozen=True, eq=False)
class RecognizedRegion:
    """A detected region paired with its recognized text (may be empty)."""

    region: DetectedRegion
    text: str


@dataclass(frozen=True)
class QARecord:
    """A question bound to a document image, with gold answers and box."""

    doc_id: str
    question_id: str
    question: str
    gold_answers: tuple[str, ...]
    gold_box: BBox | None = None
    source_field_key: str | None = None

    def __post_init__(self):
        if not self.gold_answers:
            raise ValidationError(
                f"question {self.question_id!r} has no gold answers"
            )
        object.__setattr__(self, "gold_answers", tuple(self.gold_answers))


@dataclass(frozen=True)
class Prediction:
    """A model answer with its localization in the original document."""

    question_id: str
    answer: str
    answer_box: BBox | None = None
    matched_region_ids: tuple[int, ...] = ()
    raw_model_output: str = ""
    wall_time_ms: int = 0
    error: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "matched_region_ids", tuple(self.matched_region_ids))
        if self.matched_region_ids and self.answer_box is None:
            raise ValidationError(
                f"prediction {self.question_id!r} has matched regions but no box"
            )
