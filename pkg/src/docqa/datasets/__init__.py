"""Dataset adapters: native formats in, one unified corpus schema out."""

from __future__ import annotations

from pathlib import Path

from ..errors import UsageError
from .cord import load_cord
from .corpus import (
    Corpus,
    WordTruth,
    derive_gold_box,
    kv_to_question,
    load_unified,
    save_unified,
)
from .docvqa import load_docvqa
from .funsd import load_funsd
from .sroie import load_sroie
from .synthetic import SynthConfig, generate_synthetic

FORMATS = ("funsd", "cord", "sroie", "docvqa", "unified", "synthetic")

_LOADERS = {
    "funsd": load_funsd,
    "cord": load_cord,
    "sroie": load_sroie,
    "docvqa": load_docvqa,
    "unified": load_unified,
    "synthetic": load_unified,
}


def load_corpus(root: str | Path, fmt: str, split: str | None = None) -> Corpus:
    """Load a corpus by format name; ``split`` selects a subdirectory if present."""
    if fmt not in _LOADERS:
        raise UsageError(f"unknown dataset format {fmt!r}; expected one of {FORMATS}")
    root = Path(root)
    if split:
        candidate = root / split
        if candidate.is_dir():
            root = candidate
    return _LOADERS[fmt](root)


__all__ = [
    "Corpus",
    "WordTruth",
    "SynthConfig",
    "FORMATS",
    "load_corpus",
    "load_funsd",
    "load_cord",
    "load_sroie",
    "load_docvqa",
    "load_unified",
    "save_unified",
    "generate_synthetic",
    "derive_gold_box",
    "kv_to_question",
]
