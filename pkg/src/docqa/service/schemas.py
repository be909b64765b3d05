"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

Mode = Literal["ocr-dep", "ocr-free"]
AblationFlag = Literal["none", "1", "2"]
DatasetFormat = Literal["funsd", "cord", "sroie", "docvqa", "unified", "synthetic"]


class NoiseSpec(BaseModel):
    substitution_rate: float = 0.0
    deletion_rate: float = 0.0
    seed: int = 0


class DetectorSpec(BaseModel):
    kind: Literal["reference", "precomputed"] = "reference"
    binarize_threshold: int = 128
    min_area: int = 9
    merge_gap: Optional[float] = None
    path: Optional[str] = None  # precomputed detections file


class RecognizerSpec(BaseModel):
    kind: Literal["fixture"] = "fixture"
    corpus_root: Optional[str] = None  # defaults to the dataset root
    noise: NoiseSpec = Field(default_factory=NoiseSpec)


class ModelSpec(BaseModel):
    kind: Literal["http", "mock", "echo"] = "http"
    endpoint: Optional[str] = None  # default: MODEL_ENDPOINT
    api_key: Optional[str] = None  # default: MODEL_API_KEY
    model_id: Optional[str] = None  # default: MODEL_ID
    script: Optional[str] = None  # mock script file
    max_in_flight: int = 4
    requests_per_minute: Optional[int] = None


class BackendsSpec(BaseModel):
    detector: DetectorSpec = Field(default_factory=DetectorSpec)
    recognizer: Optional[RecognizerSpec] = None
    model: ModelSpec = Field(default_factory=ModelSpec)


class HealthResponse(BaseModel):
    status: str
    version: str


class SynthRequest(BaseModel):
    out_dir: str
    n: int = 8
    seed: int = 7
    words_per_doc: tuple[int, int] = (12, 30)
    kv_pairs_per_doc: tuple[int, int] = (3, 6)
    font_size: tuple[int, int] = (14, 21)
    noise: Literal["none", "jitter"] = "none"


class SynthResponse(BaseModel):
    out_dir: str
    n_documents: int
    n_questions: int


class AskRequest(BaseModel):
    question: str
    image_path: Optional[str] = None
    image_b64: Optional[str] = None  # PNG bytes, base64
    mode: Mode = "ocr-free"
    ablation: AblationFlag = "none"
    backends: BackendsSpec = Field(default_factory=BackendsSpec)
    prompt_set_path: Optional[str] = None
    annotate_out: Optional[str] = None
    dump_constructed_dir: Optional[str] = None


class AskResponse(BaseModel):
    answer: str
    box: Optional[list[int]]
    mode: Mode
    ablation: AblationFlag
    matched_region_ids: list[int]
    raw_model_output: str
    wall_time_ms: int
    annotated_path: Optional[str] = None


class EvalRequest(BaseModel):
    dataset_root: str
    format: DatasetFormat
    out_dir: str
    split: Optional[str] = None
    mode: Mode = "ocr-free"
    ablation: AblationFlag = "none"
    backends: BackendsSpec = Field(default_factory=BackendsSpec)
    prompt_set_path: Optional[str] = None
    workers: int = 4
    cache_dir: Optional[str] = None
    resume: bool = False
    anls_threshold: float = 0.5
    text_gated: bool = False
    annotate: bool = False


class EvalResponse(BaseModel):
    report: dict
    table: str
    degraded: bool
    model_calls: int
    out_dir: str


class ScoreRequest(BaseModel):
    predictions: str
    dataset_root: str
    format: DatasetFormat
    split: Optional[str] = None
    anls_threshold: float = 0.5
    text_gated: bool = False
    report_out: Optional[str] = None


class ScoreResponse(BaseModel):
    report: dict
    table: str


class AblateRequest(BaseModel):
    dataset_root: str
    format: DatasetFormat
    out_dir: str
    split: Optional[str] = None
    backends: BackendsSpec = Field(default_factory=BackendsSpec)
    prompt_set_path: Optional[str] = None
    workers: int = 4
    cache_dir: Optional[str] = None
    anls_threshold: float = 0.5


class AblateResponse(BaseModel):
    variants: dict[str, dict]
    table: str
    out_dir: str


class ErrorBody(BaseModel):
    detail: str
    kind: str
