"""Batch evaluation: run a configured pipeline over a corpus.

Predictions stream to an append-only JSONL file in corpus order (a single
writer serializes appends, so reruns with scripted backends are byte
identical); interrupted runs resume by skipping already-recorded question
ids. Model responses are cached content-addressed under the cache directory,
keyed by backend, model, prompt-set version, and the exact request body, so a
resumed or repeated run performs zero duplicate model calls.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .core import BBox, DocumentImage, Prediction, QARecord
from .datasets.corpus import Corpus
from .detection import DetectorBackend
from .errors import DocQAError, UsageError, ValidationError
from .llm import CachingModelBackend, CountingModelBackend
from .metrics import AnlsConfig, EvalReport, score_run
from .pipeline import (
    ABLATION_NONE,
    ABLATION_ORIGINAL_IMAGE,
    ABLATION_SINGLE_CALL,
    MODE_OCR_FREE,
    AnnotationStyle,
    PipelineConfig,
    annotate,
    run,
)

logger = logging.getLogger(__name__)

PREDICTIONS_NAME = "predictions.jsonl"
REPORT_JSON_NAME = "report.json"
REPORT_TXT_NAME = "report.txt"
MANIFEST_NAME = "manifest.json"

# Dataset column order used by the human-readable tables.
CANONICAL_COLUMNS = ("docvqa", "funsd", "cord", "sroie")

ABLATION_VARIANTS = {
    "default": ABLATION_NONE,
    "ablation1": ABLATION_ORIGINAL_IMAGE,
    "ablation2": ABLATION_SINGLE_CALL,
}


@dataclass
class EvalOptions:
    out_dir: str | Path
    workers: int = 4
    cache_dir: str | Path | None = None
    resume: bool = False
    anls: AnlsConfig = field(default_factory=AnlsConfig)
    text_gated: bool = False
    split: str | None = None
    annotate: bool = False

    def __post_init__(self):
        if self.workers < 1:
            raise UsageError("workers must be >= 1")


class _MemoDetector(DetectorBackend):
    """Per-run detection memo: multi-question documents detect exactly once.

    A per-document lock collapses concurrent first access; a global flight
    lock serializes backends that declared themselves single-flight.
    """

    def __init__(self, inner: DetectorBackend):
        self.inner = inner
        self.backend_id = inner.backend_id
        self._cache: dict[str, list] = {}
        self._doc_locks: dict[str, threading.Lock] = {}
        self._lock = threading.Lock()
        self._flight = threading.Lock() if inner.single_flight else None

    def detect(self, image: DocumentImage):
        with self._lock:
            doc_lock = self._doc_locks.setdefault(image.doc_id, threading.Lock())
        with doc_lock:
            with self._lock:
                if image.doc_id in self._cache:
                    return self._cache[image.doc_id]
            if self._flight is not None:
                with self._flight:
                    regions = self.inner.detect(image)
            else:
                regions = self.inner.detect(image)
            with self._lock:
                self._cache[image.doc_id] = regions
                return regions

    def describe(self) -> dict:
        return self.inner.describe()


def _prediction_line(p: Prediction) -> str:
    return (
        json.dumps(
            {
                "question_id": p.question_id,
                "answer": p.answer,
                "answer_box": p.answer_box.as_list() if p.answer_box else None,
                "matched_region_ids": list(p.matched_region_ids),
                "raw_model_output": p.raw_model_output,
                "wall_time_ms": p.wall_time_ms,
                "error": p.error,
            },
            ensure_ascii=False,
        )
        + "\n"
    )


def _parse_prediction_line(line: str, source: str, lineno: int) -> Prediction:
    try:
        obj = json.loads(line)
        box = obj["answer_box"]
        return Prediction(
            question_id=obj["question_id"],
            answer=obj["answer"],
            answer_box=BBox.from_list(box) if box is not None else None,
            matched_region_ids=tuple(obj["matched_region_ids"]),
            raw_model_output=obj["raw_model_output"],
            wall_time_ms=int(obj["wall_time_ms"]),
            error=obj["error"],
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{source}:{lineno}: bad prediction line ({exc})")


def read_predictions(path: str | Path) -> list[Prediction]:
    path = Path(path)
    out: list[Prediction] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                out.append(_parse_prediction_line(line, str(path), lineno))
    return out


def evaluate(corpus: Corpus, cfg: PipelineConfig, opts: EvalOptions) -> EvalReport:
    """Run the pipeline over every question and write the run artifacts."""
    out_dir = Path(opts.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    predictions_path = out_dir / PREDICTIONS_NAME

    done: set[str] = set()
    if opts.resume and predictions_path.is_file():
        done = {p.question_id for p in read_predictions(predictions_path)}
        logger.info("resuming: %d predictions already recorded", len(done))
    elif predictions_path.is_file() and not opts.resume:
        predictions_path.unlink()

    counting = CountingModelBackend(cfg.model)
    model = counting
    if opts.cache_dir is not None:
        model = CachingModelBackend(
            counting, opts.cache_dir, namespace=cfg.prompt_set.version
        )
    run_cfg = dataclasses.replace(cfg, model=model, detector=_MemoDetector(cfg.detector))

    todo = [r for r in corpus.records if r.question_id not in done]
    started_at = time.strftime("%Y-%m-%dT%H:%M:%S%z")

    def answer_one(record: QARecord) -> Prediction:
        try:
            image = corpus.image(record.doc_id)
            pred = run(image, record.question, run_cfg)
            return dataclasses.replace(pred, question_id=record.question_id)
        except DocQAError as exc:
            logger.warning("question %s failed: %s", record.question_id, exc)
            return Prediction(
                question_id=record.question_id, answer="", error=str(exc)
            )

    if todo:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            futures = [pool.submit(answer_one, r) for r in todo]
            # The writer consumes futures in corpus order so the file layout
            # is independent of completion order.
            with open(predictions_path, "a", encoding="utf-8", newline="\n") as fh:
                for future in futures:
                    fh.write(_prediction_line(future.result()))
                    fh.flush()

    predictions = read_predictions(predictions_path)
    report = score_run(predictions, corpus.records, opts.anls, opts.text_gated)
    finished_at = time.strftime("%Y-%m-%dT%H:%M:%S%z")

    failures = sum(1 for p in predictions if p.error)
    degraded = failures > 0.5 * len(corpus.records)
    manifest = {
        "run_id": uuid.uuid4().hex,
        "corpus_name": corpus.name,
        "corpus_hash": corpus.content_hash(),
        "split": opts.split,
        "config": cfg.describe(),
        "anls_threshold": opts.anls.threshold,
        "text_gated": opts.text_gated,
        "workers": opts.workers,
        "started_at": started_at,
        "finished_at": finished_at,
        "model_calls": counting.calls,
        "cache_hits": model.hits if isinstance(model, CachingModelBackend) else 0,
        "total_questions": len(corpus.records),
        "question_failures": failures,
        "degraded": degraded,
    }

    (out_dir / REPORT_JSON_NAME).write_text(report.canonical_json(), encoding="utf-8")
    (out_dir / REPORT_TXT_NAME).write_text(
        metrics_table({_column_name(corpus): report}), encoding="utf-8"
    )
    with open(out_dir / MANIFEST_NAME, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if opts.annotate:
        _write_annotations(corpus, predictions, out_dir)
    if degraded:
        logger.warning("run degraded: %d/%d questions failed", failures, len(corpus.records))
    return report


def _write_annotations(
    corpus: Corpus, predictions: list[Prediction], out_dir: Path
) -> None:
    for pred in predictions:
        if pred.answer_box is None:
            continue
        record = next(
            (r for r in corpus.records if r.question_id == pred.question_id), None
        )
        if record is None:
            continue
        image = annotate(corpus.image(record.doc_id), pred.answer_box, AnnotationStyle())
        safe = pred.question_id.replace("/", "_")
        image.save_png(out_dir / f"{safe}.png")


def read_manifest(out_dir: str | Path) -> dict:
    path = Path(out_dir) / MANIFEST_NAME
    if not path.is_file():
        raise ValidationError(f"no run manifest under {out_dir}")
    return json.loads(path.read_text(encoding="utf-8"))


def score_offline(
    predictions_path: str | Path,
    corpus: Corpus,
    cfg: AnlsConfig | None = None,
    text_gated: bool = False,
) -> EvalReport:
    """Re-score a predictions file; a pure function of the two inputs."""
    predictions_path = Path(predictions_path)
    if not predictions_path.is_file():
        raise ValidationError(f"no predictions file at {predictions_path}")
    predictions = []
    known = {r.question_id for r in corpus.records}
    seen: set[str] = set()
    with open(predictions_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            pred = _parse_prediction_line(line, str(predictions_path), lineno)
            if pred.question_id not in known:
                raise ValidationError(
                    f"{predictions_path}:{lineno}: unknown question_id "
                    f"{pred.question_id!r}"
                )
            if pred.question_id in seen:
                raise ValidationError(
                    f"{predictions_path}:{lineno}: duplicate question_id "
                    f"{pred.question_id!r}"
                )
            seen.add(pred.question_id)
            predictions.append(pred)
    return score_run(predictions, corpus.records, cfg or AnlsConfig(), text_gated)


def ablation_suite(
    corpus: Corpus, base_cfg: PipelineConfig, opts: EvalOptions
) -> dict[str, EvalReport]:
    """Run default / ablation1 / ablation2 with identical backends and seeds."""
    if base_cfg.mode != MODE_OCR_FREE:
        raise UsageError("the ablation suite applies to the ocr_free mode")
    out_root = Path(opts.out_dir)
    reports: dict[str, EvalReport] = {}
    calls: dict[str, int] = {}
    for variant, ablation in ABLATION_VARIANTS.items():
        cfg = dataclasses.replace(base_cfg, ablation=ablation)
        # Separate cache namespaces per variant keep call counts honest.
        variant_opts = dataclasses.replace(
            opts,
            out_dir=out_root / variant,
            cache_dir=(out_root / variant / "cache") if opts.cache_dir else None,
        )
        reports[variant] = evaluate(corpus, cfg, variant_opts)
        calls[variant] = read_manifest(out_root / variant)["model_calls"]

    comparison = {
        "dataset": _column_name(corpus),
        "variants": {
            name: {
                "aggregate_anls": reports[name].aggregate_anls,
                "map_iou": reports[name].map_iou,
                "model_calls": calls[name],
            }
            for name in ABLATION_VARIANTS
        },
    }
    (out_root / "comparison.json").write_text(
        json.dumps(comparison, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_root / "comparison.txt").write_text(
        ablation_table(reports, calls, _column_name(corpus)), encoding="utf-8"
    )
    return reports


def _column_name(corpus: Corpus) -> str:
    return corpus.provenance


def _order_columns(names) -> list[str]:
    known = [c for c in CANONICAL_COLUMNS if c in names]
    rest = sorted(n for n in names if n not in CANONICAL_COLUMNS)
    return known + rest


def metrics_table(reports: dict[str, EvalReport]) -> str:
    """Plain-text table: metric rows, one dataset per column, percentages."""
    columns = _order_columns(reports.keys())
    width = max(12, *(len(c) + 2 for c in columns))
    header = "metric".ljust(24) + "".join(c.rjust(width) for c in columns)
    lines = [header, "-" * len(header)]
    for label, getter in (
        ("ANLS", lambda r: r.aggregate_anls),
        ("mAP@IoU[0.50:0.95]", lambda r: r.map_iou),
    ):
        row = label.ljust(24)
        for c in columns:
            row += f"{getter(reports[c]) * 100:.2f}".rjust(width)
        lines.append(row)
    return "\n".join(lines) + "\n"


def ablation_table(
    reports: dict[str, EvalReport], calls: dict[str, int], dataset: str
) -> str:
    header = f"{'variant':<12}{'ANLS':>10}{'mAP':>10}{'model_calls':>14}    ({dataset})"
    lines = [header, "-" * len(header)]
    for name in ABLATION_VARIANTS:
        r = reports[name]
        lines.append(
            f"{name:<12}{r.aggregate_anls * 100:>10.2f}{r.map_iou * 100:>10.2f}"
            f"{calls[name]:>14}"
        )
    return "\n".join(lines) + "\n"


def truth_detector(corpus: Corpus):
    """Precomputed detector fed from the corpus's exact word ground truth."""
    from .detection import PrecomputedDetector

    if corpus.word_truth is None:
        raise UsageError("corpus carries no word-level ground truth")
    return PrecomputedDetector(
        {doc: [w.box for w in words] for doc, words in corpus.word_truth.items()},
        source="corpus word truth",
    )


def gold_region_ids(corpus: Corpus, record: QARecord) -> list[int]:
    """Reading-order indices of the truth words inside a record's gold box."""
    if corpus.word_truth is None or record.gold_box is None:
        return []
    words = corpus.word_truth.get(record.doc_id, [])
    return [i for i, w in enumerate(words) if record.gold_box.contains(w.box)]


def mock_script_from_corpus(corpus: Corpus) -> list[dict]:
    """Scripted mock entries answering every question from ground truth.

    Grounding prompts (which quote the answer after the question) are matched
    first; a second catch-all entry per question serves the extraction,
    combined, and OCR-pair prompts.
    """
    grounding: list[dict] = []
    general: list[dict] = []
    for record in corpus.records:
        ids = gold_region_ids(corpus, record)
        reply = json.dumps(
            {"answer": record.gold_answers[0], "region_ids": ids}, ensure_ascii=False
        )
        grounding.append(
            {"match": f"Question: {record.question}\nAnswer:", "reply": reply}
        )
        general.append({"match": f"Question: {record.question}", "reply": reply})
    return grounding + general
