"""SROIE-style receipts: OCR line files plus per-document key-value extracts.

Expected layout under <root>:

  images/<doc_id>.png
  boxes/<doc_id>.txt   lines "x1,y1,x2,y2,x3,y3,x4,y4,TRANSCRIPT"
  keys/<doc_id>.json   {"company": ..., "date": ..., "address": ..., "total": ...}

Records carry no gold box by default (the key-value ground truth is not
localized); pass derive_boxes=True to match values against the OCR lines.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from ..core import BBox, DetectedRegion, QARecord, Quad, RecognizedRegion, quad_to_bbox
from ..errors import ValidationError
from .corpus import Corpus, derive_gold_box, kv_to_question

logger = logging.getLogger(__name__)


def _parse_box_line(line: str, path: Path, lineno: int) -> tuple[BBox, str]:
    parts = line.split(",")
    if len(parts) < 9:
        raise ValidationError(f"{path}:{lineno}: expected 8 coordinates + transcript")
    try:
        nums = [float(v) for v in parts[:8]]
    except ValueError as exc:
        raise ValidationError(f"{path}:{lineno}: bad coordinate ({exc})")
    transcript = ",".join(parts[8:]).strip()
    quad = Quad(((nums[0], nums[1]), (nums[2], nums[3]), (nums[4], nums[5]), (nums[6], nums[7])))
    return quad_to_bbox(quad), transcript


def load_sroie(root: str | Path, derive_boxes: bool = False) -> Corpus:
    root = Path(root)
    keys_dir = root / "keys"
    if not keys_dir.is_dir():
        raise ValidationError(f"no keys/ directory under {root}")

    records: list[QARecord] = []
    image_paths: dict[str, Path] = {}
    for key_path in sorted(keys_dir.glob("*.json")):
        doc_id = key_path.stem
        image_path = root / "images" / f"{doc_id}.png"
        if not image_path.is_file():
            raise ValidationError(f"missing image for {key_path}")
        image_paths[doc_id] = image_path
        try:
            fields = json.loads(key_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed key file {key_path}: {exc}")
        if not isinstance(fields, dict):
            raise ValidationError(f"malformed key file {key_path}: expected an object")

        tokens: list[RecognizedRegion] = []
        box_path = root / "boxes" / f"{doc_id}.txt"
        if derive_boxes and box_path.is_file():
            for lineno, line in enumerate(
                box_path.read_text(encoding="utf-8").splitlines(), start=1
            ):
                if not line.strip():
                    continue
                box, transcript = _parse_box_line(line, box_path, lineno)
                tokens.append(RecognizedRegion(DetectedRegion(len(tokens), box), transcript))

        for key, value in fields.items():
            value = str(value).strip()
            if not value:
                logger.warning("empty value for key %r in %s; skipped", key, key_path)
                continue
            gold_box = derive_gold_box(value, tokens) if tokens else None
            records.append(
                QARecord(
                    doc_id=doc_id,
                    question_id=f"{doc_id}:{key}",
                    question=kv_to_question(key),
                    gold_answers=(value,),
                    gold_box=gold_box,
                    source_field_key=key,
                )
            )

    return Corpus("sroie", "sroie", records, image_paths=image_paths)
