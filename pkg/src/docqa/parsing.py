"""Repair and parse model output into a grounded answer.

MLLM replies drift from the requested schema in predictable ways: code
fences, surrounding prose, synonym keys, nesting, trailing commas, stringy
ids. The repair ladder here is ordered from cheap to desperate; whatever
survives is normalized into a GroundedAnswer. Region ids are always filtered
against the caller's valid set, so repair can never invent a region.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass

from .core import BBox
from .errors import ParseError, ValidationError

ANSWER_KEYS = ("answer", "text", "value")
BOX_KEYS = ("box", "bbox", "bounding_box")
ID_KEYS = ("box_ids", "region_ids", "ids", "region_id", "box_id")
NOTE_KEYS = ("confidence_note", "note", "confidence", "explanation")

_NOT_FOUND = {"not found", "n/a", "na", "none", "null", ""}
_FENCE = re.compile(r"```[a-zA-Z]*\n?(.*?)```", re.DOTALL)
_B_ID = re.compile(r"^[Bb](\d+)$")


@dataclass(frozen=True)
class GroundedAnswer:
    answer: str
    region_ids: tuple[int, ...] | None = None
    box: BBox | None = None
    confidence_note: str | None = None
    not_found: bool = False

    def to_json_text(self) -> str:
        payload: dict = {"answer": "not found" if self.not_found else self.answer}
        if self.region_ids is not None:
            payload["region_ids"] = list(self.region_ids)
        if self.box is not None:
            payload["box"] = self.box.as_list()
        if self.confidence_note is not None:
            payload["confidence_note"] = self.confidence_note
        return json.dumps(payload, ensure_ascii=False)


def parse_grounded_answer(
    raw: str,
    expects_box: bool = False,
    valid_ids: set[int] | frozenset[int] | None = None,
) -> GroundedAnswer:
    """Parse (and repair if needed) a model reply.

    Raises ParseError, carrying the raw text, when no object can be recovered.
    """
    if raw.strip().strip("`").strip().lower().strip(" .") in _NOT_FOUND:
        return GroundedAnswer(answer="", not_found=True)
    obj = _extract_object(raw)
    record = _find_answer_record(obj)
    if record is None:
        raise ParseError("no answer-shaped object in model output", raw=raw)

    answer = _first_of(record, ANSWER_KEYS)
    ids_value = _first_of(record, ID_KEYS)
    box_value = _first_of(record, BOX_KEYS)
    note = _first_of(record, NOTE_KEYS)

    # Nested shapes: {"answer": {"text": ..., "bbox": ...}}
    if isinstance(answer, dict):
        inner = answer
        answer = _first_of(inner, ANSWER_KEYS)
        if ids_value is None:
            ids_value = _first_of(inner, ID_KEYS)
        if box_value is None:
            box_value = _first_of(inner, BOX_KEYS)

    if answer is None and ids_value is None and box_value is None:
        raise ParseError("object has none of the expected keys", raw=raw)

    answer_text = "" if answer is None else str(answer).strip()
    if answer_text.lower().strip(" .") in _NOT_FOUND:
        return GroundedAnswer(answer="", not_found=True)

    region_ids = _coerce_ids(ids_value)
    box = None
    if box_value is not None:
        coerced_box, box_as_id = _coerce_box(box_value)
        box = coerced_box
        if box_as_id is not None:
            region_ids = (region_ids or ()) + (box_as_id,)

    if region_ids is not None and valid_ids is not None:
        region_ids = tuple(i for i in region_ids if i in valid_ids)

    if region_ids is not None:
        deduped: list[int] = []
        for i in region_ids:
            if i not in deduped:
                deduped.append(i)
        region_ids = tuple(deduped)

    return GroundedAnswer(
        answer=answer_text,
        region_ids=region_ids,
        box=box,
        confidence_note=str(note) if note is not None else None,
    )


def _first_of(record: dict, keys: tuple[str, ...]):
    for key in keys:
        if key in record and record[key] is not None:
            return record[key]
    return None


def _extract_object(raw: str):
    text = raw.strip()
    fenced = _FENCE.search(text)
    if fenced:
        text = fenced.group(1).strip()
    for candidate in [text, *_balanced_spans(text)]:
        obj = _loads_lenient(candidate)
        if obj is not None:
            return obj
    raise ParseError("no parseable JSON object in model output", raw=raw)


def _loads_lenient(text: str):
    text = text.strip()
    if not text:
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    repaired = re.sub(r",\s*([\]}])", r"\1", text)  # trailing commas
    try:
        return json.loads(repaired)
    except json.JSONDecodeError:
        pass
    try:
        value = ast.literal_eval(repaired)  # single quotes, python literals
        return value if isinstance(value, (dict, list)) else None
    except (ValueError, SyntaxError, MemoryError, RecursionError):
        return None


def _balanced_spans(text: str) -> list[str]:
    """Brace-balanced spans, outermost first, ignoring braces inside strings."""
    spans: list[str] = []
    depth = 0
    start = None
    in_string = False
    escape = False
    for i, ch in enumerate(text):
        if escape:
            escape = False
            continue
        if ch == "\\" and in_string:
            escape = True
            continue
        if ch == '"':
            in_string = not in_string
            continue
        if in_string:
            continue
        if ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0 and start is not None:
                spans.append(text[start : i + 1])
                start = None
    return spans


def _find_answer_record(obj) -> dict | None:
    if isinstance(obj, list):
        for item in obj:
            found = _find_answer_record(item)
            if found is not None:
                return found
        return None
    if not isinstance(obj, dict):
        return None
    if any(k in obj for k in ANSWER_KEYS + ID_KEYS + BOX_KEYS):
        return obj
    # One level of nesting: {"result": {...}} and similar wrappers.
    for value in obj.values():
        if isinstance(value, dict) and any(
            k in value for k in ANSWER_KEYS + ID_KEYS + BOX_KEYS
        ):
            return value
    return None


def _coerce_id(value) -> int | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        text = value.strip()
        m = _B_ID.match(text)
        if m:
            return int(m.group(1))
        if text.isdigit():
            return int(text)
    return None


def _coerce_ids(value) -> tuple[int, ...] | None:
    if value is None:
        return None
    if not isinstance(value, (list, tuple)):
        value = [value]
    ids = [_coerce_id(v) for v in value]
    return tuple(i for i in ids if i is not None)


def _coerce_box(value) -> tuple[BBox | None, int | None]:
    """Return (box, region id) — a 'box' that is really "B<i>" becomes an id."""
    if isinstance(value, str):
        rid = _coerce_id(value)
        return None, rid
    if isinstance(value, dict):
        try:
            value = [value["x1"], value["y1"], value["x2"], value["y2"]]
        except KeyError:
            return None, None
    if isinstance(value, (list, tuple)) and len(value) == 4:
        try:
            numbers = [float(v) for v in value]
            return BBox.round_outward(*numbers), None
        except (TypeError, ValueError, ValidationError):
            return None, None
    return None, None
