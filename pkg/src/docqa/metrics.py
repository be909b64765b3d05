"""Textual and spatial evaluation metrics.

Two protocols: average normalized Levenshtein similarity (ANLS) for answer
text, and mAP over the IoU threshold sweep 0.50:0.05:0.95 for answer boxes.
With one unranked box per question, AP at a threshold reduces to plain
accuracy, so mAP is the mean of the ten per-threshold accuracies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .core import BBox, Prediction, QARecord
from .errors import UsageError, ValidationError

# IoU thresholds in integer hundredths to keep the sweep free of float drift.
IOU_THRESHOLDS: tuple[int, ...] = tuple(range(50, 100, 5))


def levenshtein_distance(a: str, b: str) -> int:
    """Minimal number of single-character edits transforming a into b."""
    if a == b:
        return len(a) - len(b) if len(a) > len(b) else 0
    if len(a) > len(b):
        a, b = b, a
    previous = list(range(len(a) + 1))
    for j, cb in enumerate(b, start=1):
        current = [j]
        for i, ca in enumerate(a, start=1):
            if ca == cb:
                current.append(previous[i - 1])
            else:
                current.append(1 + min(previous[i - 1], previous[i], current[-1]))
        previous = current
    return previous[-1]


def normalized_similarity(a: str, b: str) -> float:
    """1 - distance / max(len); two empty strings count as a perfect match."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein_distance(a, b) / longest


@dataclass(frozen=True)
class AnlsConfig:
    """Scoring knobs for ANLS; threshold 0 keeps raw similarities."""

    threshold: float = 0.5
    case_fold: bool = True
    trim_whitespace: bool = True

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise UsageError(f"ANLS threshold must be in [0, 1]: {self.threshold}")


def normalize_answer(text: str, cfg: AnlsConfig | None = None) -> str:
    cfg = cfg or AnlsConfig()
    if cfg.trim_whitespace:
        text = " ".join(text.split())
    if cfg.case_fold:
        text = text.lower()
    return text


def anls_score(pred: str, golds: Sequence[str], cfg: AnlsConfig | None = None) -> float:
    """Max similarity of the prediction to any gold answer, thresholded.

    Similarities strictly below the threshold are zeroed; at or above it the
    raw similarity is kept.
    """
    cfg = cfg or AnlsConfig()
    if not golds:
        raise UsageError("anls_score() needs at least one gold answer")
    pred_n = normalize_answer(pred, cfg)
    best = max(normalized_similarity(pred_n, normalize_answer(g, cfg)) for g in golds)
    return best if best >= cfg.threshold else 0.0


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 for disjoint boxes and for zero-area pairs."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = iw * ih if iw > 0 and ih > 0 else 0
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def _passes(iou_value: float, threshold_hundredths: int) -> bool:
    # Round before comparing so values landing exactly on a threshold are
    # not lost to float noise.
    return round(iou_value, 6) >= threshold_hundredths / 100.0


def _threshold_sweep(ious: list[float]) -> tuple[dict[int, float], float]:
    # The mean comes from integer pass counts in one division, so fixture
    # values like 79/100 print as exactly 0.79 instead of accumulating ulps.
    counts = {t: sum(1 for v in ious if _passes(v, t)) for t in IOU_THRESHOLDS}
    per_threshold = {t: counts[t] / len(ious) for t in IOU_THRESHOLDS}
    mean = sum(counts.values()) / (len(IOU_THRESHOLDS) * len(ious))
    return per_threshold, mean


def map_at_iou(
    pairs: Sequence[tuple[BBox | None, BBox]],
) -> tuple[dict[int, float], float]:
    """Accuracy at each IoU threshold plus their mean.

    Each pair is (predicted box or None, gold box); a missing prediction is a
    miss at every threshold. Returns ({threshold_hundredths: accuracy}, mean).
    """
    if not pairs:
        raise UsageError("map_at_iou() needs at least one (predicted, gold) pair")
    ious = [iou(p, g) if p is not None else 0.0 for p, g in pairs]
    per_threshold, mean = _threshold_sweep(ious)
    return per_threshold, mean


@dataclass(frozen=True)
class QuestionScore:
    question_id: str
    anls: float
    iou: float | None  # None when the question has no gold box


@dataclass(frozen=True)
class ReportCounts:
    total: int
    with_gold_box: int
    with_predicted_box: int


@dataclass(frozen=True)
class EvalReport:
    """Aggregated metric results for one run over one corpus."""

    per_question: tuple[QuestionScore, ...]
    aggregate_anls: float
    per_threshold_accuracy: dict[int, float]
    map_iou: float
    counts: ReportCounts
    anls_threshold: float
    iou_gating: str  # "ungated" | "text_gated"

    def to_json_dict(self) -> dict:
        return {
            "aggregate_anls": self.aggregate_anls,
            "map_iou": self.map_iou,
            "per_threshold_accuracy": {
                str(t): self.per_threshold_accuracy[t] for t in IOU_THRESHOLDS
            },
            "counts": {
                "total": self.counts.total,
                "with_gold_box": self.counts.with_gold_box,
                "with_predicted_box": self.counts.with_predicted_box,
            },
            "anls_threshold": self.anls_threshold,
            "iou_gating": self.iou_gating,
            "per_question": [
                {"question_id": q.question_id, "anls": q.anls, "iou": q.iou}
                for q in self.per_question
            ],
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


def score_run(
    predictions: Sequence[Prediction],
    gold: Sequence[QARecord],
    cfg: AnlsConfig | None = None,
    text_gated: bool = False,
) -> EvalReport:
    """Score a prediction set against gold records.

    Questions with no prediction score ANLS 0 and miss every IoU threshold.
    Questions without a gold box contribute to ANLS but are excluded from the
    mAP denominator. With ``text_gated`` a box only counts when the answer
    itself scored above zero.
    """
    cfg = cfg or AnlsConfig()
    known = {r.question_id for r in gold}
    by_qid: dict[str, Prediction] = {}
    unknown, duplicates = [], []
    for p in predictions:
        if p.question_id not in known:
            unknown.append(p.question_id)
        elif p.question_id in by_qid:
            duplicates.append(p.question_id)
        else:
            by_qid[p.question_id] = p
    if unknown:
        raise ValidationError(f"predictions for unknown question ids: {sorted(unknown)}")
    if duplicates:
        raise ValidationError(f"multiple predictions for question ids: {sorted(duplicates)}")

    rows: list[QuestionScore] = []
    boxed_ious: list[float] = []
    n_pred_boxes = 0
    for record in gold:
        pred = by_qid.get(record.question_id)
        answer = pred.answer if pred is not None else ""
        anls = anls_score(answer, record.gold_answers, cfg)
        question_iou: float | None = None
        if record.gold_box is not None:
            if pred is not None and pred.answer_box is not None:
                question_iou = iou(pred.answer_box, record.gold_box)
            else:
                question_iou = 0.0
            effective = question_iou if (not text_gated or anls > 0) else 0.0
            boxed_ious.append(effective)
        if pred is not None and pred.answer_box is not None:
            n_pred_boxes += 1
        rows.append(QuestionScore(record.question_id, anls, question_iou))

    aggregate = sum(r.anls for r in rows) / len(rows) if rows else 0.0
    if boxed_ious:
        per_threshold, mean_map = _threshold_sweep(boxed_ious)
    else:
        per_threshold = {t: 0.0 for t in IOU_THRESHOLDS}
        mean_map = 0.0

    return EvalReport(
        per_question=tuple(rows),
        aggregate_anls=aggregate,
        per_threshold_accuracy=per_threshold,
        map_iou=mean_map,
        counts=ReportCounts(
            total=len(rows),
            with_gold_box=len(boxed_ious),
            with_predicted_box=n_pred_boxes,
        ),
        anls_threshold=cfg.threshold,
        iou_gating="text_gated" if text_gated else "ungated",
    )
