"""Corpus container, question templating, and the unified on-disk format.

The unified format is one directory holding:

  manifest.jsonl    one JSON object per question:
                    {doc_id, question_id, question, gold_answers,
                     gold_box: [x1,y1,x2,y2] | null, source_field_key | null}
  corpus_meta.json  {"name": ..., "provenance": ...}
  images/           <doc_id>.png, 8-bit RGB
  words.jsonl       optional word-level ground truth (synthetic corpora):
                    {doc_id, words: [{text, box}]} in reading order
  detections.jsonl  optional replayable detector output derived from words

Dataset-native layouts (FUNSD, CORD, SROIE, DocVQA fixtures) are converted to
this shape once at ingestion; everything downstream reads only this schema.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ..core import BBox, DocumentImage, QARecord, RecognizedRegion, envelope
from ..errors import UsageError, ValidationError
from ..metrics import AnlsConfig, normalize_answer, normalized_similarity

PROVENANCES = ("funsd", "cord", "sroie", "docvqa", "synthetic")

MANIFEST_NAME = "manifest.jsonl"
META_NAME = "corpus_meta.json"
WORDS_NAME = "words.jsonl"
DETECTIONS_NAME = "detections.jsonl"
IMAGES_DIR = "images"


@dataclass(frozen=True)
class WordTruth:
    """Exact text and ink box of one rendered word (synthetic corpora)."""

    text: str
    box: BBox


class Corpus:
    """Immutable set of QA records plus lazily loadable document images."""

    def __init__(
        self,
        name: str,
        provenance: str,
        records: Sequence[QARecord],
        images: dict[str, DocumentImage] | None = None,
        image_paths: dict[str, Path] | None = None,
        word_truth: dict[str, list[WordTruth]] | None = None,
    ):
        if provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {provenance!r}")
        self.name = name
        self.provenance = provenance
        self.records = tuple(records)
        self._images = dict(images or {})
        self._image_paths = dict(image_paths or {})
        self.word_truth = word_truth
        self._lock = threading.Lock()

        seen: set[str] = set()
        for r in self.records:
            if r.question_id in seen:
                raise ValidationError(f"duplicate question_id {r.question_id!r}")
            seen.add(r.question_id)
            if r.doc_id not in self._images and r.doc_id not in self._image_paths:
                raise ValidationError(
                    f"record {r.question_id!r} references missing image {r.doc_id!r}"
                )

    def doc_ids(self) -> list[str]:
        ordered: list[str] = []
        seen: set[str] = set()
        for r in self.records:
            if r.doc_id not in seen:
                seen.add(r.doc_id)
                ordered.append(r.doc_id)
        return ordered

    def image(self, doc_id: str) -> DocumentImage:
        """Load (and cache) the image for a document; safe under concurrency."""
        with self._lock:
            cached = self._images.get(doc_id)
        if cached is not None:
            return cached
        path = self._image_paths.get(doc_id)
        if path is None:
            raise ValidationError(f"no image registered for doc {doc_id!r}")
        loaded = DocumentImage.from_png(path, doc_id)
        with self._lock:
            # First writer wins so concurrent loads stay idempotent.
            return self._images.setdefault(doc_id, loaded)

    def content_hash(self) -> str:
        """Stable hash over records and image bytes, for run manifests."""
        digest = hashlib.sha256()
        for r in self.records:
            digest.update(_record_line(r).encode("utf-8"))
        for doc_id in sorted(self.doc_ids()):
            digest.update(doc_id.encode("utf-8"))
            digest.update(self.image(doc_id).to_png_bytes())
        return digest.hexdigest()


def kv_to_question(field_key: str) -> str:
    """Deterministic question template for a key-value field."""
    if not field_key or not field_key.strip():
        raise UsageError("field key must be non-empty")
    return f"What is the content in the {field_key.strip().upper()} field?"


def derive_gold_box(
    answer: str,
    tokens: Sequence[RecognizedRegion],
    similarity_floor: float = 0.8,
) -> BBox | None:
    """Envelope of the contiguous token run that best matches the answer.

    Tokens are assumed to be in reading order. Ties on similarity go to the
    earliest start, then the shortest run. Returns None when nothing reaches
    the similarity floor; absence is a value, not an error.
    """
    if not tokens:
        return None
    cfg = AnlsConfig()
    target = normalize_answer(answer, cfg)
    if not target:
        return None
    best: tuple[float, int, int] | None = None  # (-sim, start, length)
    for start in range(len(tokens)):
        joined = ""
        for end in range(start, len(tokens)):
            joined = joined + " " + tokens[end].text if joined else tokens[end].text
            candidate = normalize_answer(joined, cfg)
            sim = normalized_similarity(candidate, target)
            key = (-round(sim, 9), start, end - start)
            if sim >= similarity_floor and (best is None or key < best):
                best = key
            if len(candidate) > 2 * len(target) + 8:
                break
    if best is None:
        return None
    _, start, length = best
    return envelope([t.region.box for t in tokens[start : start + length + 1]])


def _record_line(record: QARecord) -> str:
    payload = {
        "doc_id": record.doc_id,
        "question_id": record.question_id,
        "question": record.question,
        "gold_answers": list(record.gold_answers),
        "gold_box": record.gold_box.as_list() if record.gold_box else None,
        "source_field_key": record.source_field_key,
    }
    return json.dumps(payload, ensure_ascii=False) + "\n"


def save_unified(corpus: Corpus, out_dir: str | Path) -> Path:
    """Write a corpus in the unified format; returns the directory."""
    out = Path(out_dir)
    (out / IMAGES_DIR).mkdir(parents=True, exist_ok=True)
    with open(out / MANIFEST_NAME, "w", encoding="utf-8", newline="\n") as fh:
        for record in corpus.records:
            fh.write(_record_line(record))
    with open(out / META_NAME, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"name": corpus.name, "provenance": corpus.provenance}, fh)
        fh.write("\n")
    for doc_id in corpus.doc_ids():
        corpus.image(doc_id).save_png(out / IMAGES_DIR / f"{doc_id}.png")
    if corpus.word_truth is not None:
        with open(out / WORDS_NAME, "w", encoding="utf-8", newline="\n") as fh:
            for doc_id in corpus.doc_ids():
                words = corpus.word_truth.get(doc_id, [])
                fh.write(
                    json.dumps(
                        {
                            "doc_id": doc_id,
                            "words": [
                                {"text": w.text, "box": w.box.as_list()} for w in words
                            ],
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        with open(out / DETECTIONS_NAME, "w", encoding="utf-8", newline="\n") as fh:
            for doc_id in corpus.doc_ids():
                words = corpus.word_truth.get(doc_id, [])
                fh.write(
                    json.dumps(
                        {"doc_id": doc_id, "regions": [w.box.as_list() for w in words]}
                    )
                    + "\n"
                )
    return out


def load_unified(root: str | Path) -> Corpus:
    root = Path(root)
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        raise ValidationError(f"no {MANIFEST_NAME} under {root}")

    name, provenance = root.name, "synthetic"
    meta_path = root / META_NAME
    if meta_path.is_file():
        meta = _load_json(meta_path)
        name = meta.get("name", name)
        provenance = meta.get("provenance", provenance)

    records: list[QARecord] = []
    with open(manifest, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                box = obj.get("gold_box")
                records.append(
                    QARecord(
                        doc_id=obj["doc_id"],
                        question_id=obj["question_id"],
                        question=obj["question"],
                        gold_answers=tuple(obj["gold_answers"]),
                        gold_box=BBox.from_list(box) if box is not None else None,
                        source_field_key=obj.get("source_field_key"),
                    )
                )
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise ValidationError(f"{manifest}:{lineno}: bad record ({exc})")

    image_paths = {p.stem: p for p in sorted((root / IMAGES_DIR).glob("*.png"))}

    word_truth = None
    words_path = root / WORDS_NAME
    if words_path.is_file():
        word_truth = {}
        with open(words_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    word_truth[obj["doc_id"]] = [
                        WordTruth(w["text"], BBox.from_list(w["box"]))
                        for w in obj["words"]
                    ]
                except (KeyError, TypeError, json.JSONDecodeError) as exc:
                    raise ValidationError(f"{words_path}:{lineno}: bad entry ({exc})")

    return Corpus(
        name=name,
        provenance=provenance,
        records=records,
        image_paths=image_paths,
        word_truth=word_truth,
    )


def _load_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON ({exc})")
