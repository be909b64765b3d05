from __future__ import annotations

import json
from pathlib import Path

import pytest

from docqa.datasets import SynthConfig, generate_synthetic
from docqa.harness import mock_script_from_corpus, truth_detector
from docqa.llm import MockModelBackend

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def synth_corpus():
    corpus = generate_synthetic(SynthConfig(n_documents=8, seed=7))
    assert len(corpus.records) >= 20
    return corpus


@pytest.fixture(scope="session")
def mock_entries(synth_corpus):
    return mock_script_from_corpus(synth_corpus)


@pytest.fixture()
def mock_model(mock_entries):
    # fresh instance per test so call logs do not leak between tests
    return MockModelBackend(mock_entries)


@pytest.fixture(scope="session")
def gold_detector(synth_corpus):
    return truth_detector(synth_corpus)


@pytest.fixture(scope="session")
def malformed_cases():
    data = json.loads((FIXTURES / "malformed_model_outputs.json").read_text("utf-8"))
    return data


def write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=1), encoding="utf-8")
    return path
