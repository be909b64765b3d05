"""FUNSD-style form annotations: linked question/answer entities.

Expected layout: <root>/annotations/<doc_id>.json and <root>/images/<doc_id>.png.
Each annotation file holds {"form": [entity, ...]} where an entity carries
id, text, label, box, words (text + box each), and linking pairs [from, to].
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from ..core import BBox, QARecord, envelope
from ..errors import ValidationError
from .corpus import Corpus, kv_to_question

logger = logging.getLogger(__name__)


def load_funsd(root: str | Path) -> Corpus:
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
            form = json.loads(ann_path.read_text(encoding="utf-8"))["form"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValidationError(f"malformed annotation file {ann_path}: {exc}")
        records.extend(_records_for_doc(doc_id, form, ann_path))

    return Corpus("funsd", "funsd", records, image_paths=image_paths)


def _records_for_doc(doc_id: str, form: list[dict], ann_path: Path) -> list[QARecord]:
    try:
        by_id = {e["id"]: e for e in form}
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed entity in {ann_path}: {exc}")

    records = []
    for entity in form:
        if entity.get("label") != "question":
            continue
        answer_ids = [to for frm, to in entity.get("linking", []) if frm == entity["id"]]
        answers = [by_id[a] for a in answer_ids if a in by_id]
        if not answers:
            logger.warning(
                "unlinked question entity %s in %s; skipped", entity["id"], ann_path
            )
            continue
        key = str(entity.get("text", "")).strip().rstrip(":").strip()
        if not key:
            logger.warning(
                "question entity %s in %s has no text; skipped", entity["id"], ann_path
            )
            continue
        word_boxes = [
            BBox.from_list(w["box"]) for a in answers for w in a.get("words", [])
        ]
        gold_answers = tuple(
            " ".join(w["text"] for w in a.get("words", [])).strip() or str(a.get("text", ""))
            for a in answers
        )
        records.append(
            QARecord(
                doc_id=doc_id,
                question_id=f"{doc_id}:{entity['id']}",
                question=kv_to_question(key),
                gold_answers=gold_answers,
                gold_box=envelope(word_boxes) if word_boxes else None,
                source_field_key=key,
            )
        )
    return records
