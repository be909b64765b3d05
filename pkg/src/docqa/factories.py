"""Build pipeline backends from plain configuration dicts.

The service schemas, the CLI, and library users all funnel through these so
backend wiring behaves identically everywhere.
"""

from __future__ import annotations

from pathlib import Path

from .datasets import load_unified
from .datasets.corpus import Corpus
from .detection import (
    DetectorBackend,
    DetectorParams,
    ReferenceDetector,
    load_precomputed,
)
from .errors import UsageError
from .llm import EchoKvBackend, HttpModelBackend, MockModelBackend, ModelBackend
from .recognition import FixtureRecognizer, NoiseModel, RecognizerBackend


def build_detector(spec: dict, dataset_root: str | Path | None = None) -> DetectorBackend:
    kind = spec.get("kind", "reference")
    if kind == "reference":
        return ReferenceDetector(
            DetectorParams(
                binarize_threshold=int(spec.get("binarize_threshold", 128)),
                min_area=int(spec.get("min_area", 9)),
                merge_gap=spec.get("merge_gap"),
            )
        )
    if kind == "precomputed":
        path = spec.get("path")
        if path is None and dataset_root is not None:
            candidate = Path(dataset_root) / "detections.jsonl"
            if candidate.is_file():
                path = candidate
        if path is None:
            raise UsageError("precomputed detector needs a detections file path")
        return load_precomputed(path)
    raise UsageError(f"unknown detector kind {kind!r}")


def build_recognizer(
    spec: dict | None,
    dataset_root: str | Path | None = None,
    corpus: Corpus | None = None,
) -> RecognizerBackend | None:
    if spec is None:
        return None
    kind = spec.get("kind", "fixture")
    if kind != "fixture":
        raise UsageError(f"unknown recognizer kind {kind!r}")
    corpus_root = spec.get("corpus_root") or dataset_root
    if corpus is None or spec.get("corpus_root"):
        if corpus_root is None:
            raise UsageError("fixture recognizer needs a corpus root")
        corpus = load_unified(corpus_root)
    noise_spec = spec.get("noise") or {}
    noise = NoiseModel(
        substitution_rate=float(noise_spec.get("substitution_rate", 0.0)),
        deletion_rate=float(noise_spec.get("deletion_rate", 0.0)),
        seed=int(noise_spec.get("seed", 0)),
    )
    return FixtureRecognizer(corpus, noise)


def build_model(spec: dict) -> ModelBackend:
    kind = spec.get("kind", "http")
    if kind == "mock":
        script = spec.get("script")
        if script is None:
            raise UsageError("mock model backend needs a script file")
        return MockModelBackend.from_file(script)
    if kind == "echo":
        return EchoKvBackend()
    if kind == "http":
        return HttpModelBackend(
            endpoint=spec.get("endpoint"),
            api_key=spec.get("api_key"),
            model_id=spec.get("model_id"),
            max_in_flight=int(spec.get("max_in_flight", 4)),
            requests_per_minute=spec.get("requests_per_minute"),
        )
    raise UsageError(f"unknown model backend kind {kind!r}")
