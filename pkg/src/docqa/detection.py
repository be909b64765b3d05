"""Text detection: pluggable backends plus a deterministic reference detector.

Backends produce raw boxes; ``DetectorBackend.detect`` normalizes them into
DetectedRegions sorted in reading order (top-to-bottom bands, then
left-to-right) with dense ids and crops taken from the source image.

The reference detector is a desk-scale stand-in for a neural detector:
fixed-threshold binarization, 8-connected components, and a horizontal merge
of components sharing a baseline. Defaults were tuned once against the
synthetic generator and frozen here: threshold 128, min_area 9 px^2, and a
merge gap of 0.6x the median component width when not given explicitly.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import BBox, DetectedRegion, DocumentImage, Quad, crop, quad_to_bbox
from .errors import DetectionError, ValidationError


def reading_order(boxes: list[BBox]) -> list[int]:
    """Indices of ``boxes`` sorted top-to-bottom by band, then left-to-right.

    Boxes whose vertical centers differ by less than half the median box
    height share a band.
    """
    if not boxes:
        return []
    median_h = statistics.median(b.height for b in boxes)
    half_band = max(1.0, median_h / 2.0)
    order = sorted(range(len(boxes)), key=lambda i: (boxes[i].center()[1], boxes[i].x1, i))
    bands: list[list[int]] = []
    band_center = None
    for idx in order:
        cy = boxes[idx].center()[1]
        if band_center is None or cy - band_center >= half_band:
            bands.append([idx])
            band_center = cy
        else:
            bands[-1].append(idx)
    result: list[int] = []
    for band in bands:
        result.extend(sorted(band, key=lambda i: (boxes[i].x1, boxes[i].y1, i)))
    return result


class DetectorBackend:
    """Base detector; subclasses implement ``boxes_for``."""

    backend_id = "detector"
    needs_network = False
    single_flight = False

    def boxes_for(self, image: DocumentImage) -> list[BBox]:
        raise NotImplementedError

    def detect(self, image: DocumentImage) -> list[DetectedRegion]:
        """Detected regions in reading order with dense ids and crops."""
        try:
            boxes = self.boxes_for(image)
        except ValidationError:
            raise
        except DetectionError:
            raise
        except Exception as exc:  # backend bugs become labeled detection errors
            raise DetectionError(self.backend_id, str(exc))
        boxes = [b.clip(image.width, image.height) for b in boxes]
        ordered = [boxes[i] for i in reading_order(boxes)]
        return [
            DetectedRegion(region_id=i, box=b, crop=crop(image, b))
            for i, b in enumerate(ordered)
        ]

    def describe(self) -> dict:
        return {"backend_id": self.backend_id}


@dataclass(frozen=True)
class DetectorParams:
    binarize_threshold: int = 128
    min_area: int = 9
    merge_gap: float | None = None  # None: 0.6 x median component width

    def __post_init__(self):
        if not 0 <= self.binarize_threshold <= 255:
            raise ValidationError(
                f"binarize_threshold out of range: {self.binarize_threshold}"
            )


def _component_boxes(image: DocumentImage, threshold: int) -> list[BBox]:
    gray = image.pixels.astype(np.uint16).sum(axis=2) // 3
    ink = gray < threshold
    labels, count = ndimage.label(ink, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return []
    slices = ndimage.find_objects(labels)
    return [
        BBox(sl[1].start, sl[0].start, sl[1].stop, sl[0].stop)
        for sl in slices
        if sl is not None
    ]


def _merge_components(boxes: list[BBox], merge_gap: float) -> list[BBox]:
    # Union-find over components: same word iff the horizontal gap is below
    # merge_gap and the vertical extents overlap (handles dotted glyphs).
    parent = list(range(len(boxes)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[rj] = ri

    order = sorted(range(len(boxes)), key=lambda i: boxes[i].x1)
    for a_pos, i in enumerate(order):
        for j in order[a_pos + 1 :]:
            gap = boxes[j].x1 - boxes[i].x2
            if gap >= merge_gap:
                break
            y_overlap = min(boxes[i].y2, boxes[j].y2) - max(boxes[i].y1, boxes[j].y1)
            if y_overlap > 0:
                union(i, j)

    grouped: dict[int, list[BBox]] = {}
    for i, b in enumerate(boxes):
        grouped.setdefault(find(i), []).append(b)
    merged = [
        BBox(
            min(b.x1 for b in group),
            min(b.y1 for b in group),
            max(b.x2 for b in group),
            max(b.y2 for b in group),
        )
        for group in grouped.values()
    ]
    return merged


def reference_detect(
    image: DocumentImage, params: DetectorParams | None = None
) -> list[DetectedRegion]:
    """Binarize, find components, merge into word boxes, filter, normalize."""
    return ReferenceDetector(params).detect(image)


class ReferenceDetector(DetectorBackend):
    backend_id = "reference"

    def __init__(self, params: DetectorParams | None = None):
        self.params = params or DetectorParams()

    def boxes_for(self, image: DocumentImage) -> list[BBox]:
        components = _component_boxes(image, self.params.binarize_threshold)
        if not components:
            return []
        merge_gap = self.params.merge_gap
        if merge_gap is None:
            merge_gap = 0.6 * statistics.median(b.width for b in components)
        words = _merge_components(components, max(1.0, merge_gap))
        return [b for b in words if b.area >= self.params.min_area]

    def describe(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "binarize_threshold": self.params.binarize_threshold,
            "min_area": self.params.min_area,
            "merge_gap": self.params.merge_gap,
        }


class PrecomputedDetector(DetectorBackend):
    """Replays detector output stored as JSONL {doc_id, regions: [...]}.

    Region entries are either 4-number boxes or 8-number quads; quads are
    reduced to their axis-aligned envelopes.
    """

    backend_id = "precomputed"

    def __init__(self, regions_by_doc: dict[str, list[BBox]], source: str = ""):
        self._regions = regions_by_doc
        self._source = source

    def boxes_for(self, image: DocumentImage) -> list[BBox]:
        if image.doc_id not in self._regions:
            raise DetectionError(
                self.backend_id,
                f"no precomputed regions for doc {image.doc_id!r}",
            )
        return list(self._regions[image.doc_id])

    def describe(self) -> dict:
        return {"backend_id": self.backend_id, "path": self._source}


def load_precomputed(path: str | Path) -> PrecomputedDetector:
    path = Path(path)
    regions: dict[str, list[BBox]] = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read detections file {path}: {exc}")
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            doc_id = obj["doc_id"]
            boxes = [_parse_region(entry) for entry in obj["regions"]]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}:{lineno}: bad detection entry ({exc})")
        regions[doc_id] = boxes
    return PrecomputedDetector(regions, source=str(path))


def _parse_region(entry: list[float]) -> BBox:
    if len(entry) == 4:
        return BBox.from_list(entry)
    if len(entry) == 8:
        quad = Quad(
            (
                (entry[0], entry[1]),
                (entry[2], entry[3]),
                (entry[4], entry[5]),
                (entry[6], entry[7]),
            )
        )
        return quad_to_bbox(quad)
    raise ValueError(f"region needs 4 or 8 numbers, got {len(entry)}")
