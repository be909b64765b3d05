"""Command-line entry point: a thin client over the HTTP service.

By default each invocation runs the FastAPI app in-process (no sockets, no
server to manage); point --server / DOCQA_SERVER at a running instance to go
over the network instead. Exit status: 0 success, 1 degraded run or server
failure, 2 usage/validation error.

Setting precedence: flags > environment > config file > defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import ValidationError

logger = logging.getLogger(__name__)

_ENV_KEYS = {
    "server": "DOCQA_SERVER",
    "model_endpoint": "MODEL_ENDPOINT",
    "model_api_key": "MODEL_API_KEY",
    "model_id": "MODEL_ID",
    "cache_dir": "DOCQA_CACHE_DIR",
    "workers": "DOCQA_WORKERS",
}

_DEFAULTS = {
    "server": None,
    "model_endpoint": None,
    "model_api_key": None,
    "model_id": None,
    "cache_dir": None,
    "workers": 4,
}


class ServiceClient:
    """POSTs JSON to the service, in-process unless a server URL is given."""

    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings

            from .service.app import create_app

            with warnings.catch_warnings():
                # starlette tags its httpx-based TestClient as deprecated; it
                # is still the supported in-process transport for this CLI.
                warnings.simplefilter("ignore")
                from starlette.testclient import TestClient

                self._client = TestClient(create_app(), raise_server_exceptions=False)

    def post(self, path: str, payload: dict) -> tuple[int, dict]:
        response = self._client.post(path, json=payload)
        try:
            data = response.json()
        except ValueError:
            data = {"detail": response.text}
        return response.status_code, data


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}")
    if not isinstance(data, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return data


def resolve_settings(args: argparse.Namespace) -> dict:
    """Merge flags, environment, config file, and defaults."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    resolved = {}
    for key, default in _DEFAULTS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
            continue
        env = os.environ.get(_ENV_KEYS[key])
        if env is not None and env != "":
            resolved[key] = int(env) if key == "workers" else env
            continue
        if key in file_cfg:
            resolved[key] = file_cfg[key]
            continue
        resolved[key] = default
    return resolved


def _backends_payload(args: argparse.Namespace, settings: dict) -> dict:
    backends: dict = {
        "detector": {
            "kind": args.detector,
            "binarize_threshold": args.binarize_threshold,
            "min_area": args.min_area,
            "merge_gap": args.merge_gap,
            "path": args.detections,
        },
        "model": {
            "kind": args.model,
            "endpoint": settings["model_endpoint"],
            "api_key": settings["model_api_key"],
            "model_id": settings["model_id"],
            "script": args.model_script,
        },
    }
    if args.recognizer != "none":
        backends["recognizer"] = {
            "kind": args.recognizer,
            "corpus_root": args.recognizer_corpus,
            "noise": {
                "substitution_rate": args.noise_sub,
                "deletion_rate": args.noise_del,
                "seed": args.noise_seed,
            },
        }
    return backends


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--server", help="service base URL (default: run in-process)")
    parser.add_argument("--config", help="JSON config file with default settings")
    parser.add_argument(
        "--print-config",
        action="store_true",
        help="print the resolved settings and exit",
    )
    parser.add_argument("-v", "--verbose", action="store_true")


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("backends")
    group.add_argument("--detector", choices=["reference", "precomputed"], default="reference")
    group.add_argument("--detections", help="precomputed detections file")
    group.add_argument("--binarize-threshold", type=int, default=128)
    group.add_argument("--min-area", type=int, default=9)
    group.add_argument("--merge-gap", type=float, default=None)
    group.add_argument("--recognizer", choices=["fixture", "none"], default="none")
    group.add_argument("--recognizer-corpus", help="corpus with word ground truth")
    group.add_argument("--noise-sub", type=float, default=0.0)
    group.add_argument("--noise-del", type=float, default=0.0)
    group.add_argument("--noise-seed", type=int, default=0)
    group.add_argument("--model", choices=["http", "mock", "echo"], default="http")
    group.add_argument("--model-endpoint", dest="model_endpoint")
    group.add_argument("--model-id", dest="model_id")
    group.add_argument("--model-script", help="mock backend script file")
    group.add_argument("--prompt-set", help="prompt set JSON file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docqa",
        description="Document VQA with answer localization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_common(p_synth)
    p_synth.add_argument("--n", type=int, default=8, help="number of documents")
    p_synth.add_argument("--seed", type=int, default=7)
    p_synth.add_argument("--out", required=True, help="output corpus directory")
    p_synth.add_argument("--noise", choices=["none", "jitter"], default="none")

    p_ask = sub.add_parser("ask", help="one-shot question on one image")
    _add_common(p_ask)
    _add_backend_flags(p_ask)
    p_ask.add_argument("--image", required=True)
    p_ask.add_argument("--question", required=True)
    p_ask.add_argument("--mode", choices=["ocr-dep", "ocr-free"], default="ocr-free")
    p_ask.add_argument("--ablation", choices=["none", "1", "2"], default="none")
    p_ask.add_argument("--annotate-out", help="write the annotated PNG here")
    p_ask.add_argument(
        "--dump-constructed", help="write crop-sheet pages and map here"
    )

    p_eval = sub.add_parser("eval", help="evaluate a pipeline over a corpus")
    _add_common(p_eval)
    _add_backend_flags(p_eval)
    p_eval.add_argument("--dataset-root", required=True)
    p_eval.add_argument(
        "--format",
        required=True,
        choices=["funsd", "cord", "sroie", "docvqa", "unified", "synthetic"],
    )
    p_eval.add_argument("--split")
    p_eval.add_argument("--mode", choices=["ocr-dep", "ocr-free"], default="ocr-free")
    p_eval.add_argument("--ablation", choices=["none", "1", "2"], default="none")
    p_eval.add_argument("--workers", type=int, default=None)
    p_eval.add_argument("--cache-dir")
    p_eval.add_argument("--out-dir", required=True)
    p_eval.add_argument("--resume", action="store_true")
    p_eval.add_argument("--anls-threshold", type=float, default=0.5)
    p_eval.add_argument("--text-gated", action="store_true")
    p_eval.add_argument("--annotate", action="store_true")

    p_score = sub.add_parser("score", help="re-score a predictions file offline")
    _add_common(p_score)
    p_score.add_argument("--pred", required=True, help="predictions.jsonl path")
    p_score.add_argument("--dataset-root", required=True)
    p_score.add_argument(
        "--format",
        required=True,
        choices=["funsd", "cord", "sroie", "docvqa", "unified", "synthetic"],
    )
    p_score.add_argument("--split")
    p_score.add_argument("--anls-threshold", type=float, default=0.5)
    p_score.add_argument("--text-gated", action="store_true")
    p_score.add_argument("--report", help="directory for report.json/report.txt")

    p_ablate = sub.add_parser("ablate", help="run the OCR-free ablation suite")
    _add_common(p_ablate)
    _add_backend_flags(p_ablate)
    p_ablate.add_argument("--dataset-root", required=True)
    p_ablate.add_argument(
        "--format",
        required=True,
        choices=["funsd", "cord", "sroie", "docvqa", "unified", "synthetic"],
    )
    p_ablate.add_argument("--split")
    p_ablate.add_argument("--workers", type=int, default=None)
    p_ablate.add_argument("--cache-dir")
    p_ablate.add_argument("--out-dir", required=True)
    p_ablate.add_argument("--anls-threshold", type=float, default=0.5)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    _add_common(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)

    return parser


def _finish(status: int, data: dict, on_ok) -> int:
    if status == 200:
        return on_ok(data)
    detail = data.get("detail", data)
    print(f"error: {detail}", file=sys.stderr)
    if status in (400, 422):
        return 2
    return 1


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        stream=sys.stderr,
    )
    try:
        settings = resolve_settings(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if getattr(args, "print_config", False):
        print(json.dumps(settings, indent=2, sort_keys=True))
        return 0

    if args.command == "serve":
        import uvicorn

        from .service.app import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0

    client = ServiceClient(settings["server"])

    if args.command == "synth":
        status, data = client.post(
            "/synth",
            {"out_dir": args.out, "n": args.n, "seed": args.seed, "noise": args.noise},
        )
        return _finish(status, data, lambda d: (print(json.dumps(d)), 0)[1])

    if args.command == "ask":
        payload = {
            "image_path": str(Path(args.image).resolve()),
            "question": args.question,
            "mode": args.mode,
            "ablation": args.ablation,
            "backends": _backends_payload(args, settings),
            "prompt_set_path": args.prompt_set,
            "annotate_out": args.annotate_out,
            "dump_constructed_dir": args.dump_constructed,
        }
        status, data = client.post("/ask", payload)

        def ok(d: dict) -> int:
            print(
                json.dumps(
                    {
                        "answer": d["answer"],
                        "box": d["box"],
                        "mode": d["mode"],
                        "ablation": d["ablation"],
                    }
                )
            )
            return 0

        return _finish(status, data, ok)

    if args.command == "eval":
        payload = {
            "dataset_root": args.dataset_root,
            "format": args.format,
            "split": args.split,
            "mode": args.mode,
            "ablation": args.ablation,
            "backends": _backends_payload(args, settings),
            "prompt_set_path": args.prompt_set,
            "workers": args.workers if args.workers is not None else settings["workers"],
            "cache_dir": args.cache_dir or settings["cache_dir"],
            "out_dir": args.out_dir,
            "resume": args.resume,
            "anls_threshold": args.anls_threshold,
            "text_gated": args.text_gated,
            "annotate": args.annotate,
        }
        status, data = client.post("/eval", payload)

        def ok(d: dict) -> int:
            print(d["table"], end="")
            print(f"artifacts: {d['out_dir']}")
            if d["degraded"]:
                print("run degraded: over half the questions failed", file=sys.stderr)
                return 1
            return 0

        return _finish(status, data, ok)

    if args.command == "score":
        payload = {
            "predictions": args.pred,
            "dataset_root": args.dataset_root,
            "format": args.format,
            "split": args.split,
            "anls_threshold": args.anls_threshold,
            "text_gated": args.text_gated,
            "report_out": args.report,
        }
        status, data = client.post("/score", payload)
        return _finish(status, data, lambda d: (print(d["table"], end=""), 0)[1])

    if args.command == "ablate":
        payload = {
            "dataset_root": args.dataset_root,
            "format": args.format,
            "split": args.split,
            "backends": _backends_payload(args, settings),
            "prompt_set_path": args.prompt_set,
            "workers": args.workers if args.workers is not None else settings["workers"],
            "cache_dir": args.cache_dir or settings["cache_dir"],
            "out_dir": args.out_dir,
            "anls_threshold": args.anls_threshold,
        }
        status, data = client.post("/ablate", payload)
        return _finish(status, data, lambda d: (print(d["table"], end=""), 0)[1])

    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
