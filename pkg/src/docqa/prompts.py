"""Prompt construction for both pipeline flows.

Prompt wording lives in versioned JSON files (the bundled set is
prompt_sets/default.json), not in code: editing a prompt changes the set
version, which flows into the cache namespace. Builders are deterministic so
equal inputs produce byte-equal request bodies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .core import BBox, DocumentImage, RecognizedRegion
from .cropsheet import CropSheet
from .errors import UsageError, ValidationError
from .llm import ImagePart, ModelRequest, TextPart

_REQUIRED_TEMPLATES = (
    "system",
    "ocr_dependent",
    "answer_extraction",
    "grounding",
    "grounding_combined",
)


@dataclass(frozen=True)
class PromptSet:
    version: str
    templates: dict[str, str]

    def render(self, name: str, **values: str) -> str:
        text = self.templates[name]
        # Plain replacement instead of str.format: templates contain literal
        # JSON braces.
        for key, value in values.items():
            text = text.replace("{" + key + "}", value)
        return text


def load_prompt_set(path: str | Path | None = None) -> PromptSet:
    """Load a prompt set from a JSON file, or the bundled default."""
    if path is None:
        raw = (
            resources.files("docqa").joinpath("prompt_sets/default.json").read_text("utf-8")
        )
        source = "bundled default"
    else:
        raw = Path(path).read_text(encoding="utf-8")
        source = str(path)
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed prompt set {source}: {exc}")
    missing = [t for t in _REQUIRED_TEMPLATES if t not in data]
    if missing:
        raise ValidationError(f"prompt set {source} is missing templates: {missing}")
    version = str(data.get("version", "unversioned"))
    return PromptSet(version, {k: str(v) for k, v in data.items() if k != "version"})


def _pair_line(pair: RecognizedRegion) -> str:
    b = pair.region.box
    return f"B{pair.region.region_id} [{b.x1},{b.y1},{b.x2},{b.y2}]: {pair.text}"


def _id_line(region_id: int, box: BBox, page: int | None) -> str:
    suffix = f" (page {page})" if page is not None else ""
    return f"B{region_id}{suffix} [{box.x1},{box.y1},{box.x2},{box.y2}]"


def prompt_ocr_dependent(
    pairs: Sequence[RecognizedRegion], question: str, prompts: PromptSet
) -> ModelRequest:
    """Text-only request carrying every (text, box) pair plus the question."""
    if not pairs:
        raise UsageError("need at least one recognized region")
    if not question.strip():
        raise UsageError("question must be non-empty")
    body = prompts.render(
        "ocr_dependent",
        pairs="\n".join(_pair_line(p) for p in pairs),
        question=question,
    )
    return ModelRequest(
        system_prompt=prompts.templates["system"],
        user_parts=(TextPart(body),),
        request_tag="ocr_dependent",
    )


def prompt_answer_extraction(
    image: DocumentImage,
    question: str,
    prompts: PromptSet,
    max_image_dim: int = 2048,
) -> ModelRequest:
    """Full document image plus the question; answer text only."""
    if not question.strip():
        raise UsageError("question must be non-empty")
    send = image
    tag = "answer_extraction"
    if max(image.width, image.height) > max_image_dim:
        send = _downscale(image, max_image_dim)
        tag += ":downscaled"
    body = prompts.render("answer_extraction", question=question)
    return ModelRequest(
        system_prompt=prompts.templates["system"],
        user_parts=(ImagePart(send.to_png_bytes()), TextPart(body)),
        request_tag=tag,
    )


def prompt_grounding(
    sheets: Sequence[CropSheet],
    boxes: Sequence[tuple[int, BBox]],
    question: str,
    answer: str | None,
    prompts: PromptSet,
    include_original: bool = False,
    original: DocumentImage | None = None,
) -> ModelRequest:
    """Sheet pages plus id lines plus Q (and A, unless combined mode).

    ``answer=None`` selects the combined template that asks the model to both
    answer and ground in one call.
    """
    if not sheets:
        raise UsageError("need at least one sheet page")
    if not question.strip():
        raise UsageError("question must be non-empty")
    sheet_ids = sorted(row.region_id for s in sheets for row in s.rows)
    listed_ids = sorted(rid for rid, _ in boxes)
    if sheet_ids != listed_ids:
        raise UsageError(
            f"region ids on sheets {sheet_ids} do not match listed boxes {listed_ids}"
        )
    if include_original and original is None:
        raise UsageError("include_original requested but no original image given")

    page_of = {row.region_id: s.page for s in sheets for row in s.rows}
    multipage = len(sheets) > 1
    id_lines = "\n".join(
        _id_line(rid, box, page_of[rid] if multipage else None)
        for rid, box in sorted(boxes)
    )
    parts: list[TextPart | ImagePart] = [
        ImagePart(s.image.to_png_bytes()) for s in sorted(sheets, key=lambda s: s.page)
    ]
    if include_original:
        parts.append(ImagePart(original.to_png_bytes()))
    if answer is None:
        body = prompts.render("grounding_combined", id_lines=id_lines, question=question)
        tag = "grounding_combined"
    else:
        body = prompts.render(
            "grounding", id_lines=id_lines, question=question, answer=answer
        )
        tag = "grounding"
    parts.append(TextPart(body))
    return ModelRequest(
        system_prompt=prompts.templates["system"],
        user_parts=tuple(parts),
        request_tag=tag,
    )


def _downscale(image: DocumentImage, max_dim: int) -> DocumentImage:
    import numpy as np

    h, w = image.height, image.width
    factor = max_dim / max(h, w)
    new_h, new_w = max(1, int(h * factor)), max(1, int(w * factor))
    row_idx = (np.arange(new_h) * h // new_h).astype(int)
    col_idx = (np.arange(new_w) * w // new_w).astype(int)
    return DocumentImage(image.doc_id, image.pixels[row_idx][:, col_idx])
