"""Crop sheets: detected crops stacked one per row, each labeled with its id.

The sheet is what the grounding model sees instead of OCR output: row i shows
the crop for region i followed by the text label "(Bi)". The sheet keeps the
id -> source-box mapping so an id list coming back from the model can be
resolved to a box in the original document. Sheets taller than the configured
cap split into pages.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import BBox, DetectedRegion, DocumentImage, envelope
from .errors import GroundingError, LayoutError, UsageError, ValidationError
from .glyphs import draw_text, text_height, text_width


@dataclass(frozen=True)
class SheetLayout:
    row_padding: int = 8
    label_gap: int = 12
    max_crop_height: int = 48
    label_template: str = "(B{i})"
    canvas_width: int = 1024
    background: tuple[int, int, int] = (255, 255, 255)
    max_canvas_height: int = 8192
    label_scale: int = 2
    margin: int = 8

    def __post_init__(self):
        for name in (
            "row_padding",
            "label_gap",
            "max_crop_height",
            "canvas_width",
            "max_canvas_height",
            "label_scale",
        ):
            if getattr(self, name) <= 0:
                raise ValidationError(f"layout field {name} must be positive")
        if "{i}" not in self.label_template:
            raise ValidationError("label_template needs an {i} placeholder")


@dataclass(frozen=True)
class SheetRow:
    region_id: int
    source_box: BBox  # in the original document image
    row_box: BBox  # where the (possibly scaled) crop sits on the sheet


@dataclass(frozen=True, eq=False)
class CropSheet:
    image: DocumentImage
    rows: tuple[SheetRow, ...]
    layout: SheetLayout
    page: int = 0


def scale_to_height(crop: np.ndarray, max_height: int) -> np.ndarray:
    """Nearest-neighbor downscale preserving aspect; no-op when short enough."""
    h, w = crop.shape[:2]
    if h <= max_height:
        return crop
    new_h = max_height
    new_w = max(1, round(w * max_height / h))
    row_idx = (np.arange(new_h) * h // new_h).astype(int)
    col_idx = (np.arange(new_w) * w // new_w).astype(int)
    return crop[row_idx][:, col_idx]


def build_crop_sheets(
    regions: Sequence[DetectedRegion], layout: SheetLayout | None = None
) -> list[CropSheet]:
    """Render one row per region, in id order; returns one sheet per page."""
    layout = layout or SheetLayout()
    if not regions:
        raise UsageError("cannot build a crop sheet from zero regions")
    ordered = sorted(regions, key=lambda r: r.region_id)
    if [r.region_id for r in ordered] != list(range(len(ordered))):
        raise ValidationError("region ids must be dense from 0")

    label_h = text_height(layout.label_scale)
    prepared: list[tuple[DetectedRegion, np.ndarray, int]] = []
    for region in ordered:
        if region.crop is None:
            raise UsageError(f"region {region.region_id} carries no crop pixels")
        scaled = scale_to_height(region.crop, layout.max_crop_height)
        label_w = text_width(
            layout.label_template.format(i=region.region_id), layout.label_scale
        )
        needed = layout.margin + scaled.shape[1] + layout.label_gap + label_w
        if needed > layout.canvas_width:
            raise LayoutError(
                f"region {region.region_id} needs {needed} px, canvas is "
                f"{layout.canvas_width} px wide"
            )
        prepared.append((region, scaled, max(scaled.shape[0], label_h)))

    # Split rows into pages under the canvas height cap.
    pages: list[list[tuple[DetectedRegion, np.ndarray, int]]] = [[]]
    page_height = 0
    for item in prepared:
        row_total = item[2] + layout.row_padding
        if pages[-1] and page_height + row_total > layout.max_canvas_height:
            pages.append([])
            page_height = 0
        pages[-1].append(item)
        page_height += row_total

    sheets: list[CropSheet] = []
    for page_index, items in enumerate(pages):
        height = sum(h + layout.row_padding for _, _, h in items)
        canvas = np.empty((height, layout.canvas_width, 3), dtype=np.uint8)
        canvas[:, :] = layout.background
        rows: list[SheetRow] = []
        y = 0
        for region, scaled, row_h in items:
            ch, cw = scaled.shape[:2]
            x = layout.margin
            canvas[y : y + ch, x : x + cw] = scaled
            label = layout.label_template.format(i=region.region_id)
            label_y = y + (row_h - label_h) // 2
            draw_text(canvas, x + cw + layout.label_gap, label_y, label, layout.label_scale)
            rows.append(
                SheetRow(
                    region_id=region.region_id,
                    source_box=region.box,
                    row_box=BBox(x, y, x + cw, y + ch),
                )
            )
            y += row_h + layout.row_padding
        sheets.append(
            CropSheet(
                image=DocumentImage(f"sheet-p{page_index}", canvas),
                rows=tuple(rows),
                layout=layout,
                page=page_index,
            )
        )
    return sheets


def resolve_region_ids(
    ids: Sequence[int], sheets: CropSheet | Sequence[CropSheet]
) -> BBox:
    """Envelope of the referenced source boxes, in original image coordinates."""
    if isinstance(sheets, CropSheet):
        sheets = [sheets]
    by_id: dict[int, BBox] = {}
    for sheet in sheets:
        for row in sheet.rows:
            by_id[row.region_id] = row.source_box
    unknown = [i for i in ids if i not in by_id]
    if unknown:
        raise GroundingError(f"unknown region ids: {sorted(set(unknown))}")
    if not ids:
        raise GroundingError("empty region id list")
    return envelope([by_id[i] for i in ids])


def dump_sheets(
    sheets: Sequence[CropSheet], out_dir: str | Path, stem: str = "sheet"
) -> list[Path]:
    """Write sheet pages as PNG plus a sidecar map file, for inspection."""
    import json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    map_path = out / f"{stem}_map.jsonl"
    with open(map_path, "w", encoding="utf-8", newline="\n") as fh:
        for sheet in sheets:
            png = out / f"{stem}_p{sheet.page}.png"
            sheet.image.save_png(png)
            written.append(png)
            for row in sheet.rows:
                fh.write(
                    json.dumps(
                        {
                            "region_id": row.region_id,
                            "source_box": row.source_box.as_list(),
                            "row_box": row.row_box.as_list(),
                            "page": sheet.page,
                        }
                    )
                    + "\n"
                )
    written.append(map_path)
    return written
