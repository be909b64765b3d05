"""End-to-end question answering over one document image.

Two flows share the detection step and the final localized Prediction:

  ocr_dependent: detect -> recognize -> one model call over (text, box) pairs
  ocr_free:      detect -> crop sheet; model extracts the answer from the raw
                 image, then a second call grounds it to region ids

Ablation 1 adds the original image to the grounding call; ablation 2 drops
the extraction call and asks the grounding call for answer and ids at once.
Every stage failure is wrapped with its stage name; unparseable model output
is not a failure, it becomes an empty answer with the raw text retained.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field

from .core import BBox, DocumentImage, Prediction, envelope
from .cropsheet import SheetLayout, build_crop_sheets, resolve_region_ids, dump_sheets
from .detection import DetectorBackend
from .errors import (
    DocQAError,
    ParseError,
    PipelineError,
    UsageError,
    ValidationError,
)
from .llm import ModelBackend, complete
from .metrics import iou
from .parsing import parse_grounded_answer
from .prompts import (
    PromptSet,
    load_prompt_set,
    prompt_answer_extraction,
    prompt_grounding,
    prompt_ocr_dependent,
)
from .recognition import RecognizerBackend, recognize_all

logger = logging.getLogger(__name__)

MODE_OCR_DEPENDENT = "ocr_dependent"
MODE_OCR_FREE = "ocr_free"
ABLATION_NONE = "none"
ABLATION_ORIGINAL_IMAGE = "ablation1"
ABLATION_SINGLE_CALL = "ablation2"


@dataclass
class PipelineConfig:
    mode: str
    detector: DetectorBackend
    model: ModelBackend
    recognizer: RecognizerBackend | None = None
    ablation: str = ABLATION_NONE
    layout: SheetLayout = field(default_factory=SheetLayout)
    prompt_set: PromptSet | None = None
    snap_iou: float = 0.5
    max_image_dim: int = 2048
    sheet_dump_dir: str | None = None

    def __post_init__(self):
        if self.mode not in (MODE_OCR_DEPENDENT, MODE_OCR_FREE):
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.ablation not in (
            ABLATION_NONE,
            ABLATION_ORIGINAL_IMAGE,
            ABLATION_SINGLE_CALL,
        ):
            raise UsageError(f"unknown ablation {self.ablation!r}")
        if self.mode == MODE_OCR_DEPENDENT and self.recognizer is None:
            raise UsageError("ocr_dependent mode needs a recognizer backend")
        if self.mode == MODE_OCR_DEPENDENT and self.ablation != ABLATION_NONE:
            raise UsageError("ablations apply only to the ocr_free mode")
        if self.prompt_set is None:
            self.prompt_set = load_prompt_set()

    def describe(self) -> dict:
        return {
            "mode": self.mode,
            "ablation": self.ablation,
            "detector": self.detector.describe(),
            "recognizer": self.recognizer.describe() if self.recognizer else None,
            "model": self.model.describe(),
            "prompt_set": self.prompt_set.version,
            "snap_iou": self.snap_iou,
            "max_image_dim": self.max_image_dim,
        }


@contextmanager
def _stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except DocQAError as exc:
        raise PipelineError(name, exc)


def run(image: DocumentImage, question: str, cfg: PipelineConfig) -> Prediction:
    if cfg.mode == MODE_OCR_DEPENDENT:
        return run_ocr_dependent(image, question, cfg)
    return run_ocr_free(image, question, cfg)


def run_ocr_dependent(
    image: DocumentImage, question: str, cfg: PipelineConfig
) -> Prediction:
    if cfg.mode != MODE_OCR_DEPENDENT:
        raise UsageError("config mode is not ocr_dependent")
    question_id = f"{image.doc_id}?{question}"

    with _stage("detection"):
        regions = cfg.detector.detect(image)
    if not regions:
        return Prediction(question_id=question_id, answer="")

    with _stage("recognition"):
        pairs = recognize_all(cfg.recognizer, regions, doc_id=image.doc_id)

    with _stage("model"):
        request = prompt_ocr_dependent(pairs, question, cfg.prompt_set)
        response = complete(request, cfg.model)

    valid_ids = {r.region_id for r in regions}
    try:
        parsed = parse_grounded_answer(
            response.raw_text, expects_box=True, valid_ids=valid_ids
        )
    except ParseError:
        logger.warning("unparseable model output for %s", question_id)
        return Prediction(
            question_id=question_id,
            answer="",
            raw_model_output=response.raw_text,
            wall_time_ms=response.latency_ms,
        )

    if parsed.not_found:
        return Prediction(
            question_id=question_id,
            answer="",
            raw_model_output=response.raw_text,
            wall_time_ms=response.latency_ms,
        )

    box_by_id = {r.region_id: r.box for r in regions}
    answer_box: BBox | None = None
    matched: tuple[int, ...] = ()
    if parsed.region_ids:
        matched = parsed.region_ids
        answer_box = envelope([box_by_id[i] for i in matched])
    elif parsed.box is not None:
        # Free coordinates: snap to the nearest detected box when it clearly
        # overlaps one, otherwise keep them verbatim (clipped to the canvas).
        best_id, best_iou = None, 0.0
        for rid, box in box_by_id.items():
            overlap = iou(parsed.box, box)
            if overlap > best_iou:
                best_id, best_iou = rid, overlap
        if best_id is not None and best_iou >= cfg.snap_iou:
            matched = (best_id,)
            answer_box = box_by_id[best_id]
        else:
            answer_box = parsed.box.clip(image.width, image.height)

    return Prediction(
        question_id=question_id,
        answer=parsed.answer,
        answer_box=answer_box,
        matched_region_ids=matched,
        raw_model_output=response.raw_text,
        wall_time_ms=response.latency_ms,
    )


def run_ocr_free(image: DocumentImage, question: str, cfg: PipelineConfig) -> Prediction:
    if cfg.mode != MODE_OCR_FREE:
        raise UsageError("config mode is not ocr_free")
    question_id = f"{image.doc_id}?{question}"

    with _stage("detection"):
        regions = cfg.detector.detect(image)
    if not regions:
        return Prediction(question_id=question_id, answer="")

    with _stage("sheet"):
        sheets = build_crop_sheets(regions, cfg.layout)
        if cfg.sheet_dump_dir:
            dump_sheets(sheets, cfg.sheet_dump_dir, stem=image.doc_id)

    latency = 0
    answer = ""
    extraction_raw = ""
    if cfg.ablation != ABLATION_SINGLE_CALL:
        with _stage("extraction"):
            request = prompt_answer_extraction(
                image, question, cfg.prompt_set, cfg.max_image_dim
            )
            response = complete(request, cfg.model)
        latency += response.latency_ms
        extraction_raw = response.raw_text
        try:
            extracted = parse_grounded_answer(response.raw_text)
        except ParseError:
            logger.warning("unparseable extraction output for %s", question_id)
            return Prediction(
                question_id=question_id,
                answer="",
                raw_model_output=response.raw_text,
                wall_time_ms=latency,
            )
        if extracted.not_found:
            return Prediction(
                question_id=question_id,
                answer="",
                raw_model_output=response.raw_text,
                wall_time_ms=latency,
            )
        answer = extracted.answer

    boxes = [(r.region_id, r.box) for r in regions]
    valid_ids = {r.region_id for r in regions}
    grounding_answer = None if cfg.ablation == ABLATION_SINGLE_CALL else answer
    try:
        with _stage("grounding"):
            request = prompt_grounding(
                sheets,
                boxes,
                question,
                grounding_answer,
                cfg.prompt_set,
                include_original=cfg.ablation == ABLATION_ORIGINAL_IMAGE,
                original=image if cfg.ablation == ABLATION_ORIGINAL_IMAGE else None,
            )
            response = complete(request, cfg.model)
        latency += response.latency_ms
        parsed = parse_grounded_answer(
            response.raw_text, expects_box=True, valid_ids=valid_ids
        )
    except (PipelineError, ParseError) as exc:
        # A grounding failure must not cost us an already extracted answer.
        if cfg.ablation == ABLATION_SINGLE_CALL:
            if isinstance(exc, ParseError):
                return Prediction(
                    question_id=question_id,
                    answer="",
                    raw_model_output=exc.raw,
                    wall_time_ms=latency,
                )
            raise
        logger.warning("grounding failed for %s: %s", question_id, exc)
        return Prediction(
            question_id=question_id,
            answer=answer,
            raw_model_output=extraction_raw,
            wall_time_ms=latency,
        )

    if cfg.ablation == ABLATION_SINGLE_CALL:
        if parsed.not_found:
            return Prediction(
                question_id=question_id,
                answer="",
                raw_model_output=response.raw_text,
                wall_time_ms=latency,
            )
        answer = parsed.answer

    answer_box: BBox | None = None
    matched: tuple[int, ...] = ()
    if parsed.region_ids:
        matched = parsed.region_ids
        answer_box = resolve_region_ids(matched, sheets)
    elif parsed.box is not None:
        answer_box = parsed.box.clip(image.width, image.height)
    else:
        logger.warning("grounding returned no usable region for %s", question_id)

    return Prediction(
        question_id=question_id,
        answer=answer,
        answer_box=answer_box,
        matched_region_ids=matched,
        raw_model_output=response.raw_text,
        wall_time_ms=latency,
    )


@dataclass(frozen=True)
class AnnotationStyle:
    color: tuple[int, int, int] = (220, 30, 30)
    thickness: int = 3


def annotate(
    image: DocumentImage, box: BBox, style: AnnotationStyle | None = None
) -> DocumentImage:
    """Copy of the image with a rectangle outline around ``box``."""
    style = style or AnnotationStyle()
    if style.thickness <= 0:
        raise UsageError(f"outline thickness must be positive: {style.thickness}")
    if not box.within(image.width, image.height):
        raise ValidationError(
            f"annotation box {box.as_list()} exceeds image bounds "
            f"{image.width}x{image.height}"
        )
    pixels = image.pixels.copy()
    t = style.thickness
    # Strips sit just inside the box edge so a border-hugging box still shows;
    # a box thinner than 2t fills solid instead of crashing.
    inner_y1 = min(box.y1 + t, box.y2)
    inner_y2 = max(box.y2 - t, box.y1)
    inner_x1 = min(box.x1 + t, box.x2)
    inner_x2 = max(box.x2 - t, box.x1)
    pixels[box.y1 : inner_y1, box.x1 : box.x2] = style.color
    pixels[inner_y2 : box.y2, box.x1 : box.x2] = style.color
    pixels[box.y1 : box.y2, box.x1 : inner_x1] = style.color
    pixels[box.y1 : box.y2, inner_x2 : box.x2] = style.color
    return DocumentImage(image.doc_id, pixels)
