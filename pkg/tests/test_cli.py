from __future__ import annotations

import json

import pytest

from conftest import write_json
from docqa.cli import build_parser, main, resolve_settings
from docqa.datasets import load_unified
from docqa.harness import mock_script_from_corpus

SUBCOMMANDS = ["synth", "ask", "eval", "score", "ablate", "serve"]


@pytest.fixture()
def corpus_dir(tmp_path):
    rc = main(["synth", "--n", "4", "--seed", "9", "--out", str(tmp_path / "corpus")])
    assert rc == 0
    return tmp_path / "corpus"


@pytest.fixture()
def script_path(corpus_dir, tmp_path):
    corpus = load_unified(corpus_dir)
    return write_json(tmp_path / "script.json", mock_script_from_corpus(corpus))


def mock_flags(corpus_dir, script_path):
    return [
        "--detector",
        "precomputed",
        "--detections",
        str(corpus_dir / "detections.jsonl"),
        "--model",
        "mock",
        "--model-script",
        str(script_path),
    ]


class TestHelp:
    @pytest.mark.parametrize("command", SUBCOMMANDS)
    def test_help_exits_zero_without_side_effects(self, command, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        with pytest.raises(SystemExit) as info:
            main([command, "--help"])
        assert info.value.code == 0
        assert list(tmp_path.iterdir()) == []

    def test_missing_required_flag_exits_two(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["ask", "--question", "only"])
        assert info.value.code == 2


class TestSynthCommand:
    def test_deterministic_directory_trees(self, tmp_path, capsys):
        assert main(["synth", "--n", "3", "--seed", "5", "--out", str(tmp_path / "a")]) == 0
        assert main(["synth", "--n", "3", "--seed", "5", "--out", str(tmp_path / "b")]) == 0
        a, b = tmp_path / "a", tmp_path / "b"
        files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    def test_zero_documents_exits_two(self, tmp_path, capsys):
        rc = main(["synth", "--n", "0", "--out", str(tmp_path / "c")])
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_manifest_validates_against_unified_schema(self, corpus_dir):
        lines = (corpus_dir / "manifest.jsonl").read_text().splitlines()
        required = {
            "doc_id",
            "question_id",
            "question",
            "gold_answers",
            "gold_box",
            "source_field_key",
        }
        for line in lines:
            obj = json.loads(line)
            assert set(obj) == required
            assert isinstance(obj["gold_answers"], list) and obj["gold_answers"]
            box = obj["gold_box"]
            assert box is None or (len(box) == 4 and all(isinstance(v, int) for v in box))


class TestAskCommand:
    def test_prints_structured_answer_line(
        self, corpus_dir, script_path, tmp_path, capsys
    ):
        corpus = load_unified(corpus_dir)
        record = corpus.records[0]
        annotated = tmp_path / "out" / "ann.png"
        rc = main(
            [
                "ask",
                "--image",
                str(corpus_dir / "images" / f"{record.doc_id}.png"),
                "--question",
                record.question,
                "--mode",
                "ocr-free",
                "--annotate-out",
                str(annotated),
                *mock_flags(corpus_dir, script_path),
            ]
        )
        assert rc == 0
        line = capsys.readouterr().out.strip()
        payload = json.loads(line)
        assert set(payload) == {"answer", "box", "mode", "ablation"}
        assert payload["answer"] == record.gold_answers[0]
        assert payload["box"] == record.gold_box.as_list()
        assert annotated.is_file()

    def test_invalid_mode_ablation_combo_exits_two(
        self, corpus_dir, script_path, capsys
    ):
        corpus = load_unified(corpus_dir)
        record = corpus.records[0]
        rc = main(
            [
                "ask",
                "--image",
                str(corpus_dir / "images" / f"{record.doc_id}.png"),
                "--question",
                record.question,
                "--mode",
                "ocr-dep",
                "--ablation",
                "1",
                "--recognizer",
                "fixture",
                "--recognizer-corpus",
                str(corpus_dir),
                *mock_flags(corpus_dir, script_path),
            ]
        )
        assert rc == 2


class TestEvalCommand:
    def test_eval_writes_reports_and_exits_zero(
        self, corpus_dir, script_path, tmp_path, capsys
    ):
        out = tmp_path / "run"
        rc = main(
            [
                "eval",
                "--dataset-root",
                str(corpus_dir),
                "--format",
                "synthetic",
                "--mode",
                "ocr-free",
                "--out-dir",
                str(out),
                "--workers",
                "2",
                *mock_flags(corpus_dir, script_path),
            ]
        )
        assert rc == 0
        assert "ANLS" in capsys.readouterr().out
        for name in ("predictions.jsonl", "report.json", "report.txt", "manifest.json"):
            assert (out / name).is_file()

    def test_degraded_run_exits_one(self, corpus_dir, tmp_path, capsys):
        empty_script = write_json(tmp_path / "empty.json", [])
        rc = main(
            [
                "eval",
                "--dataset-root",
                str(corpus_dir),
                "--format",
                "synthetic",
                "--mode",
                "ocr-free",
                "--out-dir",
                str(tmp_path / "bad"),
                *mock_flags(corpus_dir, empty_script),
            ]
        )
        assert rc == 1


class TestScoreCommand:
    def test_rescore_and_tamper_detection(
        self, corpus_dir, script_path, tmp_path, capsys
    ):
        out = tmp_path / "run"
        assert (
            main(
                [
                    "eval",
                    "--dataset-root",
                    str(corpus_dir),
                    "--format",
                    "synthetic",
                    "--mode",
                    "ocr-free",
                    "--out-dir",
                    str(out),
                    *mock_flags(corpus_dir, script_path),
                ]
            )
            == 0
        )
        rc = main(
            [
                "score",
                "--pred",
                str(out / "predictions.jsonl"),
                "--dataset-root",
                str(corpus_dir),
                "--format",
                "synthetic",
                "--report",
                str(tmp_path / "rescore"),
            ]
        )
        assert rc == 0
        assert (tmp_path / "rescore" / "report.json").read_bytes() == (
            out / "report.json"
        ).read_bytes()

        pred = out / "predictions.jsonl"
        pred.write_text(pred.read_text() + "{broken\n")
        rc = main(
            [
                "score",
                "--pred",
                str(pred),
                "--dataset-root",
                str(corpus_dir),
                "--format",
                "synthetic",
            ]
        )
        assert rc == 2
        assert "bad prediction line" in capsys.readouterr().err


class TestAblateCommand:
    def test_emits_three_reports_and_comparison(
        self, corpus_dir, script_path, tmp_path, capsys
    ):
        out = tmp_path / "ablate"
        rc = main(
            [
                "ablate",
                "--dataset-root",
                str(corpus_dir),
                "--format",
                "synthetic",
                "--out-dir",
                str(out),
                "--workers",
                "2",
                *mock_flags(corpus_dir, script_path),
            ]
        )
        assert rc == 0
        for variant in ("default", "ablation1", "ablation2"):
            assert (out / variant / "report.json").is_file()
        assert (out / "comparison.json").is_file()
        assert (out / "comparison.txt").is_file()
        assert "ablation2" in capsys.readouterr().out


class TestConfigResolution:
    def test_print_config_exits_zero(self, capsys, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        rc = main(["synth", "--n", "1", "--out", "x", "--print-config"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert "server" in payload and "model_endpoint" in payload
        assert list(tmp_path.iterdir()) == []  # no side effects

    def test_precedence_flags_env_file_defaults(self, tmp_path, monkeypatch):
        cfg_file = write_json(
            tmp_path / "cfg.json",
            {"model_endpoint": "http://from-file", "model_id": "file-model", "workers": 9},
        )
        monkeypatch.setenv("MODEL_ENDPOINT", "http://from-env")
        parser = build_parser()
        args = parser.parse_args(
            [
                "eval",
                "--dataset-root",
                "r",
                "--format",
                "unified",
                "--out-dir",
                "o",
                "--config",
                str(cfg_file),
                "--model-endpoint",
                "http://from-flag",
            ]
        )
        settings = resolve_settings(args)
        assert settings["model_endpoint"] == "http://from-flag"  # flag beats env
        assert settings["model_id"] == "file-model"  # file beats default
        assert settings["workers"] == 9
        monkeypatch.delenv("MODEL_ENDPOINT")
        args2 = parser.parse_args(
            ["eval", "--dataset-root", "r", "--format", "unified", "--out-dir", "o"]
        )
        assert resolve_settings(args2)["workers"] == 4  # default

    def test_env_beats_file(self, tmp_path, monkeypatch):
        cfg_file = write_json(tmp_path / "cfg.json", {"model_id": "file-model"})
        monkeypatch.setenv("MODEL_ID", "env-model")
        parser = build_parser()
        args = parser.parse_args(
            [
                "eval",
                "--dataset-root",
                "r",
                "--format",
                "unified",
                "--out-dir",
                "o",
                "--config",
                str(cfg_file),
            ]
        )
        assert resolve_settings(args)["model_id"] == "env-model"
