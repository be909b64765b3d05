"""Text recognition backends and the character-level noise model.

The fixture recognizer answers from a synthetic corpus's exact word ground
truth (crops are identified by document and box, matched by IoU >= 0.5, since
detector boxes are near but not equal to generator boxes). Its noise model
corrupts characters with hash-derived randomness keyed on
(seed, doc_id, region_id, char index), so output is independent of call
order and concurrency.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .core import DetectedRegion, RecognizedRegion
from .datasets.corpus import Corpus, WordTruth
from .errors import RecognitionError, UsageError, ValidationError
from .metrics import iou

_NOISE_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"


@dataclass(frozen=True)
class NoiseModel:
    substitution_rate: float = 0.0
    deletion_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name, rate in (
            ("substitution_rate", self.substitution_rate),
            ("deletion_rate", self.deletion_rate),
        ):
            if not 0.0 <= rate <= 1.0:
                raise ValidationError(f"{name} out of [0, 1]: {rate}")
        if self.substitution_rate + self.deletion_rate > 1.0:
            raise ValidationError("substitution_rate + deletion_rate must be <= 1")

    @property
    def is_noiseless(self) -> bool:
        return self.substitution_rate == 0.0 and self.deletion_rate == 0.0


def _unit(*key: object) -> float:
    digest = hashlib.blake2b(
        ":".join(str(k) for k in key).encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") / 2**64


def apply_noise(text: str, noise: NoiseModel, stream_key: str) -> str:
    """Corrupt ``text`` character by character.

    One uniform draw per character partitions into substitute / delete / keep,
    so for a fixed seed the corrupted positions at a lower substitution rate
    are a subset of those at a higher one.
    """
    if noise.is_noiseless:
        return text
    out: list[str] = []
    for index, ch in enumerate(text):
        u = _unit(noise.seed, stream_key, index, "op")
        if u < noise.substitution_rate:
            pool = _NOISE_ALPHABET.replace(ch.upper(), "") or _NOISE_ALPHABET
            pick = int(_unit(noise.seed, stream_key, index, "sub") * len(pool))
            out.append(pool[min(pick, len(pool) - 1)])
        elif u < noise.substitution_rate + noise.deletion_rate:
            continue
        else:
            out.append(ch)
    return "".join(out)


class RecognizerBackend:
    """Base recognizer; deterministic for identical inputs."""

    backend_id = "recognizer"

    def recognize(
        self,
        crop: np.ndarray | None,
        *,
        doc_id: str | None = None,
        region: DetectedRegion | None = None,
    ) -> str:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"backend_id": self.backend_id}


class FixtureRecognizer(RecognizerBackend):
    """Looks recognized text up in generator ground truth, then adds noise."""

    backend_id = "fixture"

    def __init__(self, corpus: Corpus, noise: NoiseModel | None = None):
        if corpus.word_truth is None:
            raise UsageError(
                "fixture recognizer needs a corpus with word-level ground truth"
            )
        self._truth: dict[str, list[WordTruth]] = corpus.word_truth
        self.noise = noise or NoiseModel()

    def _lookup(self, doc_id: str, region: DetectedRegion) -> str | None:
        best_text, best_iou = None, 0.0
        for word in self._truth.get(doc_id, []):
            overlap = iou(region.box, word.box)
            if overlap > best_iou:
                best_text, best_iou = word.text, overlap
        return best_text if best_iou >= 0.5 else None

    def recognize(self, crop, *, doc_id=None, region=None) -> str:
        if doc_id is None or region is None:
            raise RecognitionError(
                "fixture recognizer needs doc_id and region to identify the crop"
            )
        text = self._lookup(doc_id, region)
        if text is None:
            if crop is not None and not (crop < 128).any():
                return ""  # blank crop: recognition failure is representable
            raise RecognitionError(
                f"no ground-truth word for box {region.box.as_list()} in doc {doc_id!r}"
            )
        return apply_noise(text, self.noise, f"{doc_id}:{region.region_id}")

    def describe(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "substitution_rate": self.noise.substitution_rate,
            "deletion_rate": self.noise.deletion_rate,
            "seed": self.noise.seed,
        }


def recognize(
    backend: RecognizerBackend,
    crop: np.ndarray | None,
    *,
    doc_id: str | None = None,
    region: DetectedRegion | None = None,
) -> str:
    try:
        return backend.recognize(crop, doc_id=doc_id, region=region)
    except RecognitionError:
        raise
    except Exception as exc:
        raise RecognitionError(f"[{backend.backend_id}] {exc}")


def recognize_all(
    backend: RecognizerBackend,
    regions: list[DetectedRegion],
    doc_id: str | None = None,
) -> list[RecognizedRegion]:
    """Recognize every region, preserving order and index alignment."""
    out: list[RecognizedRegion] = []
    for region in regions:
        try:
            text = recognize(backend, region.crop, doc_id=doc_id, region=region)
        except RecognitionError as exc:
            raise RecognitionError(f"region {region.region_id}: {exc}")
        out.append(RecognizedRegion(region=region, text=text))
    return out
