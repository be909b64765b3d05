"""Fully controlled synthetic corpus generator.

Renders form-like documents with the bundled glyph atlas: a few KEY: VALUE
lines (which become the QA records) interleaved with filler words. Every word
box is known exactly, which is what makes lossless end-to-end pipeline checks
possible. Output is byte-deterministic for a given seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from ..core import BBox, DocumentImage, QARecord, envelope
from ..errors import UsageError
from ..glyphs import GLYPH_ADVANCE, GLYPH_H, draw_text, text_width
from .corpus import Corpus, WordTruth, kv_to_question

_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
_DIGITS = "0123456789"

CANVAS_WIDTH = 640
MARGIN = 20


@dataclass(frozen=True)
class SynthConfig:
    n_documents: int = 8
    words_per_doc: tuple[int, int] = (12, 30)
    font_size: tuple[int, int] = (14, 21)
    seed: int = 7
    noise: str = "none"  # none | jitter
    kv_pairs_per_doc: tuple[int, int] = (3, 6)

    def __post_init__(self):
        if self.n_documents < 1:
            raise UsageError("n_documents must be >= 1")
        for lo, hi in (self.words_per_doc, self.font_size, self.kv_pairs_per_doc):
            if lo > hi or lo < 1:
                raise UsageError(f"empty or invalid range ({lo}, {hi})")
        if self.noise not in ("none", "jitter"):
            raise UsageError(f"unknown noise mode {self.noise!r}")


def _random_word(rng: random.Random, lo: int = 3, hi: int = 8, digits: bool = False) -> str:
    alphabet = _DIGITS if digits else _LETTERS
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(lo, hi)))


def generate_synthetic(cfg: SynthConfig) -> Corpus:
    """Render ``cfg.n_documents`` documents with exact word ground truth."""
    images: dict[str, DocumentImage] = {}
    word_truth: dict[str, list[WordTruth]] = {}
    records: list[QARecord] = []
    used_keys: set[str] = set()

    for doc_index in range(cfg.n_documents):
        # Integer arithmetic keeps the per-document stream stable regardless
        # of hash randomization.
        rng = random.Random(cfg.seed * 1_000_003 + doc_index)
        doc_id = f"doc{doc_index:04d}"
        image, words, fields = _render_document(rng, doc_id, cfg, used_keys)
        images[doc_id] = image
        word_truth[doc_id] = words
        for key, value_text, value_box in fields:
            records.append(
                QARecord(
                    doc_id=doc_id,
                    question_id=f"{doc_id}:{key}",
                    question=kv_to_question(key),
                    gold_answers=(value_text,),
                    gold_box=value_box,
                    source_field_key=key,
                )
            )

    return Corpus(
        name=f"synthetic-{cfg.seed}",
        provenance="synthetic",
        records=records,
        images=images,
        word_truth=word_truth,
    )


def _render_document(
    rng: random.Random,
    doc_id: str,
    cfg: SynthConfig,
    used_keys: set[str],
) -> tuple[DocumentImage, list[WordTruth], list[tuple[str, str, BBox]]]:
    scale = max(1, round(rng.randint(*cfg.font_size) / GLYPH_H))
    glyph_h = GLYPH_H * scale
    line_pitch = int(glyph_h * 1.8)
    word_gap = 2 * GLYPH_ADVANCE * scale  # >= 2x glyph width, keeps words apart

    n_kv = rng.randint(*cfg.kv_pairs_per_doc)
    n_filler = max(0, rng.randint(*cfg.words_per_doc) - n_kv * 2)

    # Plan lines first so the canvas height is known before drawing.
    lines: list[list[tuple[str, str | None]]] = []  # (word text, field key or None)
    fields_planned: list[tuple[str, list[str]]] = []
    for _ in range(n_kv):
        key = _random_word(rng, 4, 7)
        while key in used_keys:
            key = _random_word(rng, 4, 7)
        used_keys.add(key)
        n_value_words = rng.randint(1, 3)
        value_words = [
            _random_word(rng, 3, 8, digits=rng.random() < 0.3)
            for _ in range(n_value_words)
        ]
        fields_planned.append((key, value_words))
        lines.append([(f"{key}:", key)] + [(w, None) for w in value_words])
    remaining = n_filler
    while remaining > 0:
        n = min(remaining, rng.randint(2, 5))
        lines.append([(_random_word(rng), None) for _ in range(n)])
        remaining -= n
    rng.shuffle(lines)

    height = 2 * MARGIN + max(1, len(lines)) * line_pitch
    canvas = np.full((height, CANVAS_WIDTH, 3), 255, dtype=np.uint8)

    words: list[WordTruth] = []
    value_boxes: dict[str, list[BBox]] = {}
    pending_key: str | None = None
    y = MARGIN
    for line in lines:
        x = MARGIN + rng.randint(0, 3 * scale)
        for text, key in line:
            if x + text_width(text, scale) > CANVAS_WIDTH - MARGIN:
                break  # line budget exhausted; planned lines are usually short
            jx = jy = 0
            if cfg.noise == "jitter":
                jx, jy = rng.randint(-2, 2), rng.randint(-2, 2)
            ink = draw_text(canvas, x + jx, y + jy, text, scale)
            if ink is not None:
                words.append(WordTruth(text, ink))
                if key is not None:
                    pending_key = key
                elif pending_key is not None:
                    value_boxes.setdefault(pending_key, []).append(ink)
            x += text_width(text, scale) + word_gap
        pending_key = None
        y += line_pitch

    fields: list[tuple[str, str, BBox]] = []
    for key, value_words in fields_planned:
        boxes = value_boxes.get(key)
        if not boxes or len(boxes) != len(value_words):
            continue  # value clipped by the right margin; skip the record
        fields.append((key, " ".join(value_words), envelope(boxes)))

    return DocumentImage(doc_id, canvas), words, fields
