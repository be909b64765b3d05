from __future__ import annotations

import base64
import warnings

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from starlette.testclient import TestClient

from conftest import write_json
from docqa.datasets import save_unified
from docqa.harness import mock_script_from_corpus
from docqa.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(), raise_server_exceptions=False)


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory, synth_corpus):
    root = tmp_path_factory.mktemp("service") / "corpus"
    save_unified(synth_corpus, root)
    return root


@pytest.fixture(scope="module")
def script_path(tmp_path_factory, synth_corpus):
    path = tmp_path_factory.mktemp("service-script") / "script.json"
    write_json(path, mock_script_from_corpus(synth_corpus))
    return path


def mock_backends(corpus_dir, script_path, recognizer=False):
    backends = {
        "detector": {"kind": "precomputed", "path": str(corpus_dir / "detections.jsonl")},
        "model": {"kind": "mock", "script": str(script_path)},
    }
    if recognizer:
        backends["recognizer"] = {"kind": "fixture", "corpus_root": str(corpus_dir)}
    return backends


class TestHealth:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"


class TestSynthEndpoint:
    def test_generates_corpus(self, client, tmp_path):
        out = tmp_path / "c"
        r = client.post("/synth", json={"out_dir": str(out), "n": 2, "seed": 3})
        assert r.status_code == 200
        assert r.json()["n_documents"] == 2
        assert (out / "manifest.jsonl").is_file()
        assert (out / "detections.jsonl").is_file()

    def test_invalid_count_is_400(self, client, tmp_path):
        r = client.post("/synth", json={"out_dir": str(tmp_path), "n": 0})
        assert r.status_code == 400
        assert r.json()["kind"] == "UsageError"

    def test_schema_violation_is_422(self, client):
        r = client.post("/synth", json={"n": 2})  # out_dir missing
        assert r.status_code == 422


class TestAskEndpoint:
    def test_answers_with_box(self, client, synth_corpus, corpus_dir, script_path, tmp_path):
        record = synth_corpus.records[0]
        annotated = tmp_path / "ann.png"
        r = client.post(
            "/ask",
            json={
                "image_path": str(corpus_dir / "images" / f"{record.doc_id}.png"),
                "question": record.question,
                "mode": "ocr-free",
                "backends": mock_backends(corpus_dir, script_path),
                "annotate_out": str(annotated),
            },
        )
        assert r.status_code == 200
        body = r.json()
        assert body["answer"] == record.gold_answers[0]
        assert body["box"] == record.gold_box.as_list()
        assert annotated.is_file()

    def test_accepts_base64_image(self, client, synth_corpus, corpus_dir, script_path):
        record = synth_corpus.records[0]
        png = (corpus_dir / "images" / f"{record.doc_id}.png").read_bytes()
        r = client.post(
            "/ask",
            json={
                "image_b64": base64.b64encode(png).decode(),
                "question": record.question,
                "mode": "ocr-free",
                "backends": {
                    "detector": {"kind": "reference"},
                    "model": {"kind": "mock", "script": str(script_path)},
                },
            },
        )
        assert r.status_code == 200
        assert r.json()["answer"] == record.gold_answers[0]

    def test_both_image_sources_rejected(self, client, script_path, corpus_dir):
        r = client.post(
            "/ask",
            json={
                "image_path": "/x.png",
                "image_b64": "aaaa",
                "question": "q",
                "backends": mock_backends(corpus_dir, script_path),
            },
        )
        assert r.status_code == 400

    def test_invalid_mode_ablation_combo_is_400(
        self, client, synth_corpus, corpus_dir, script_path
    ):
        record = synth_corpus.records[0]
        r = client.post(
            "/ask",
            json={
                "image_path": str(corpus_dir / "images" / f"{record.doc_id}.png"),
                "question": record.question,
                "mode": "ocr-dep",
                "ablation": "1",
                "backends": mock_backends(corpus_dir, script_path, recognizer=True),
            },
        )
        assert r.status_code == 400
        assert "ablation" in r.json()["detail"]

    def test_dump_constructed_writes_sheets(
        self, client, synth_corpus, corpus_dir, script_path, tmp_path
    ):
        record = synth_corpus.records[0]
        dump = tmp_path / "sheets"
        r = client.post(
            "/ask",
            json={
                "image_path": str(corpus_dir / "images" / f"{record.doc_id}.png"),
                "question": record.question,
                "mode": "ocr-free",
                "backends": mock_backends(corpus_dir, script_path),
                "dump_constructed_dir": str(dump),
            },
        )
        assert r.status_code == 200
        assert list(dump.glob("*_p0.png"))
        assert list(dump.glob("*_map.jsonl"))


class TestEvalEndpoint:
    def test_full_run(self, client, corpus_dir, script_path, tmp_path):
        r = client.post(
            "/eval",
            json={
                "dataset_root": str(corpus_dir),
                "format": "synthetic",
                "out_dir": str(tmp_path / "run"),
                "mode": "ocr-free",
                "backends": mock_backends(corpus_dir, script_path),
                "workers": 2,
            },
        )
        assert r.status_code == 200
        body = r.json()
        assert body["report"]["aggregate_anls"] == 1.0
        assert body["report"]["map_iou"] == 1.0
        assert body["degraded"] is False
        assert "ANLS" in body["table"]
        assert (tmp_path / "run" / "manifest.json").is_file()

    def test_ocr_dep_run(self, client, corpus_dir, script_path, tmp_path):
        r = client.post(
            "/eval",
            json={
                "dataset_root": str(corpus_dir),
                "format": "synthetic",
                "out_dir": str(tmp_path / "dep"),
                "mode": "ocr-dep",
                "backends": mock_backends(corpus_dir, script_path, recognizer=True),
            },
        )
        assert r.status_code == 200
        assert r.json()["report"]["aggregate_anls"] == 1.0

    def test_missing_dataset_is_400(self, client, script_path, corpus_dir, tmp_path):
        r = client.post(
            "/eval",
            json={
                "dataset_root": str(tmp_path / "nowhere"),
                "format": "unified",
                "out_dir": str(tmp_path / "r"),
                "backends": mock_backends(corpus_dir, script_path),
            },
        )
        assert r.status_code == 400


class TestScoreEndpoint:
    def test_rescore_matches_live_bytes(self, client, corpus_dir, script_path, tmp_path):
        run_dir = tmp_path / "run"
        r = client.post(
            "/eval",
            json={
                "dataset_root": str(corpus_dir),
                "format": "synthetic",
                "out_dir": str(run_dir),
                "mode": "ocr-free",
                "backends": mock_backends(corpus_dir, script_path),
            },
        )
        assert r.status_code == 200
        score_out = tmp_path / "rescore"
        r2 = client.post(
            "/score",
            json={
                "predictions": str(run_dir / "predictions.jsonl"),
                "dataset_root": str(corpus_dir),
                "format": "synthetic",
                "report_out": str(score_out),
            },
        )
        assert r2.status_code == 200
        assert (score_out / "report.json").read_bytes() == (
            run_dir / "report.json"
        ).read_bytes()

    def test_tampered_predictions_is_400(self, client, corpus_dir, tmp_path):
        bad = tmp_path / "p.jsonl"
        bad.write_text('{"hello": 1}\n')
        r = client.post(
            "/score",
            json={
                "predictions": str(bad),
                "dataset_root": str(corpus_dir),
                "format": "synthetic",
            },
        )
        assert r.status_code == 400
        assert ":1" in r.json()["detail"]


class TestAblateEndpoint:
    def test_three_variants(self, client, corpus_dir, script_path, tmp_path):
        r = client.post(
            "/ablate",
            json={
                "dataset_root": str(corpus_dir),
                "format": "synthetic",
                "out_dir": str(tmp_path / "ablate"),
                "backends": mock_backends(corpus_dir, script_path),
                "workers": 2,
            },
        )
        assert r.status_code == 200
        body = r.json()
        assert set(body["variants"]) == {"default", "ablation1", "ablation2"}
        n = body["variants"]["ablation2"]["model_calls"]
        assert body["variants"]["default"]["model_calls"] == 2 * n
        for variant in body["variants"]:
            assert (tmp_path / "ablate" / variant / "report.json").is_file()
        assert (tmp_path / "ablate" / "comparison.txt").is_file()
