"""CORD-style receipt annotations: categorized line groups of quad words.

Expected layout: <root>/annotations/<doc_id>.json and <root>/images/<doc_id>.png.
Each file holds {"valid_line": [{"words": [{"quad": {x1..y4}, "text": ...}],
"category": "total.total_price", ...}]}. Word quads are reduced to their
axis-aligned envelopes at ingestion.

A category that appears on several lines (repeated menu items, or the same
amount under different fields) yields one record per line, so the ambiguity
is preserved rather than collapsed.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from ..core import BBox, QARecord, Quad, envelope, quad_to_bbox
from ..errors import ValidationError
from .corpus import Corpus, kv_to_question

logger = logging.getLogger(__name__)


def _field_key(category: str) -> str:
    tail = category.split(".")[-1]
    return tail.replace("_", " ").strip()


def _word_box(word: dict) -> BBox:
    quad = word.get("quad")
    if quad is None:
        return BBox.from_list(word["box"])
    points = tuple(
        (float(quad[f"x{i}"]), float(quad[f"y{i}"])) for i in (1, 2, 3, 4)
    )
    return quad_to_bbox(Quad(points))


def load_cord(root: str | Path) -> Corpus:
    root = Path(root)
    ann_dir = root / "annotations"
    img_dir = root / "images"
    if not ann_dir.is_dir():
        raise ValidationError(f"no annotations/ directory under {root}")

    records: list[QARecord] = []
    image_paths: dict[str, Path] = {}
    for ann_path in sorted(ann_dir.glob("*.json")):
        doc_id = ann_path.stem
        image_path = img_dir / f"{doc_id}.png"
        if not image_path.is_file():
            raise ValidationError(f"missing image for annotation {ann_path}")
        image_paths[doc_id] = image_path
        try:
            lines = json.loads(ann_path.read_text(encoding="utf-8"))["valid_line"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValidationError(f"malformed annotation file {ann_path}: {exc}")

        occurrence: dict[str, int] = {}
        for line in lines:
            category = line.get("category", "")
            words = line.get("words", [])
            if not category or not words:
                logger.warning("uncategorized or empty line in %s; skipped", ann_path)
                continue
            key = _field_key(category)
            k = occurrence.get(category, 0)
            occurrence[category] = k + 1
            try:
                boxes = [_word_box(w) for w in words]
                text = " ".join(str(w["text"]) for w in words).strip()
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"malformed word in {ann_path}: {exc}")
            if not text:
                continue
            records.append(
                QARecord(
                    doc_id=doc_id,
                    question_id=f"{doc_id}:{category}:{k}",
                    question=kv_to_question(key),
                    gold_answers=(text,),
                    gold_box=envelope(boxes),
                    source_field_key=key,
                )
            )

    return Corpus("cord", "cord", records, image_paths=image_paths)
