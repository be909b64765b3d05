"""DocVQA-style question files with optional OCR token sidecars.

Expected layout under <root>:

  questions.json       {"data": [{"questionId", "question", "answers",
                                  "image": "images/<doc_id>.png"}]}
  images/<doc_id>.png
  ocr/<doc_id>.json    optional, {"words": [{"text", "box": [x1,y1,x2,y2]}]}
                       in reading order

The dataset ships answer strings only; when OCR tokens are present a gold box
is derived by matching the first answer variant against contiguous token
runs. That derivation is a harness convention, not part of the dataset.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..core import BBox, DetectedRegion, QARecord, RecognizedRegion
from ..errors import ValidationError
from .corpus import Corpus, derive_gold_box

def _load_tokens(path: Path) -> list[RecognizedRegion]:
    try:
        words = json.loads(path.read_text(encoding="utf-8"))["words"]
        return [
            RecognizedRegion(DetectedRegion(i, BBox.from_list(w["box"])), str(w["text"]))
            for i, w in enumerate(words)
        ]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"malformed OCR file {path}: {exc}")


def load_docvqa(root: str | Path) -> Corpus:
    root = Path(root)
    questions_path = root / "questions.json"
    if not questions_path.is_file():
        raise ValidationError(f"no questions.json under {root}")
    try:
        data = json.loads(questions_path.read_text(encoding="utf-8"))["data"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"malformed question file {questions_path}: {exc}")

    records: list[QARecord] = []
    image_paths: dict[str, Path] = {}
    tokens_cache: dict[str, list[RecognizedRegion]] = {}
    seen: set[str] = set()
    for entry in data:
        try:
            question_id = str(entry["questionId"])
            question = entry["question"]
            answers = tuple(str(a) for a in entry.get("answers", []))
            image_rel = entry["image"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed question entry in {questions_path}: {exc}")
        if question_id in seen:
            raise ValidationError(f"duplicate question_id {question_id!r} in {questions_path}")
        seen.add(question_id)
        if not answers:
            raise ValidationError(f"question {question_id!r} has no answers")

        image_path = root / image_rel
        if not image_path.is_file():
            raise ValidationError(f"missing image {image_path} for question {question_id!r}")
        doc_id = image_path.stem
        image_paths[doc_id] = image_path

        if doc_id not in tokens_cache:
            ocr_path = root / "ocr" / f"{doc_id}.json"
            tokens_cache[doc_id] = _load_tokens(ocr_path) if ocr_path.is_file() else []
        tokens = tokens_cache[doc_id]
        gold_box = derive_gold_box(answers[0], tokens) if tokens else None

        records.append(
            QARecord(
                doc_id=doc_id,
                question_id=question_id,
                question=question,
                gold_answers=answers,
                gold_box=gold_box,
            )
        )

    return Corpus("docvqa", "docvqa", records, image_paths=image_paths)
