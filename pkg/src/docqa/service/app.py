"""FastAPI service wrapping the pipeline, generator, and evaluation harness.

Path-typed request fields refer to the service host's filesystem; the bundled
CLI runs the app in-process by default, so for the common single-machine case
those are simply local paths.
"""

from __future__ import annotations

import base64
import logging
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..core import DocumentImage
from ..datasets import SynthConfig, generate_synthetic, load_corpus, save_unified
from ..errors import DocQAError, UsageError, ValidationError
from ..factories import build_detector, build_model, build_recognizer
from ..harness import (
    EvalOptions,
    ablation_suite,
    ablation_table,
    evaluate,
    metrics_table,
    read_manifest,
    score_offline,
)
from ..metrics import AnlsConfig
from ..pipeline import (
    ABLATION_NONE,
    ABLATION_ORIGINAL_IMAGE,
    ABLATION_SINGLE_CALL,
    MODE_OCR_DEPENDENT,
    MODE_OCR_FREE,
    AnnotationStyle,
    PipelineConfig,
    annotate,
    run,
)
from ..prompts import load_prompt_set
from . import schemas

logger = logging.getLogger(__name__)

_MODES = {"ocr-dep": MODE_OCR_DEPENDENT, "ocr-free": MODE_OCR_FREE}
_ABLATIONS = {
    "none": ABLATION_NONE,
    "1": ABLATION_ORIGINAL_IMAGE,
    "2": ABLATION_SINGLE_CALL,
}


def _pipeline_config(
    mode: str,
    ablation: str,
    backends: schemas.BackendsSpec,
    prompt_set_path: str | None,
    dataset_root: str | None = None,
    corpus=None,
    dump_dir: str | None = None,
) -> PipelineConfig:
    recognizer_spec = backends.recognizer
    if recognizer_spec is None and mode == "ocr-dep":
        recognizer_spec = schemas.RecognizerSpec()
    return PipelineConfig(
        mode=_MODES[mode],
        ablation=_ABLATIONS[ablation],
        detector=build_detector(backends.detector.model_dump(), dataset_root),
        recognizer=build_recognizer(
            recognizer_spec.model_dump() if recognizer_spec else None,
            dataset_root,
            corpus,
        ),
        model=build_model(backends.model.model_dump()),
        prompt_set=load_prompt_set(prompt_set_path),
        sheet_dump_dir=dump_dir,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="docqa", version=__version__)

    @app.exception_handler(DocQAError)
    async def docqa_error_handler(request: Request, exc: DocQAError):
        status = 400 if isinstance(exc, (UsageError, ValidationError)) else 500
        return JSONResponse(
            status_code=status,
            content={"detail": str(exc), "kind": type(exc).__name__},
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        cfg = SynthConfig(
            n_documents=req.n,
            words_per_doc=req.words_per_doc,
            font_size=req.font_size,
            seed=req.seed,
            noise=req.noise,
            kv_pairs_per_doc=req.kv_pairs_per_doc,
        )
        corpus = generate_synthetic(cfg)
        save_unified(corpus, req.out_dir)
        return schemas.SynthResponse(
            out_dir=req.out_dir,
            n_documents=cfg.n_documents,
            n_questions=len(corpus.records),
        )

    @app.post("/ask", response_model=schemas.AskResponse)
    def ask(req: schemas.AskRequest):
        if (req.image_path is None) == (req.image_b64 is None):
            raise UsageError("provide exactly one of image_path or image_b64")
        if req.image_path is not None:
            path = Path(req.image_path)
            if not path.is_file():
                raise ValidationError(f"no image at {path}")
            image = DocumentImage.from_png(path)
        else:
            image = DocumentImage.from_png_bytes(
                base64.b64decode(req.image_b64), "upload"
            )
        cfg = _pipeline_config(
            req.mode,
            req.ablation,
            req.backends,
            req.prompt_set_path,
            dump_dir=req.dump_constructed_dir,
        )
        prediction = run(image, req.question, cfg)
        annotated_path = None
        if req.annotate_out and prediction.answer_box is not None:
            out = annotate(image, prediction.answer_box, AnnotationStyle())
            Path(req.annotate_out).parent.mkdir(parents=True, exist_ok=True)
            out.save_png(req.annotate_out)
            annotated_path = req.annotate_out
        return schemas.AskResponse(
            answer=prediction.answer,
            box=prediction.answer_box.as_list() if prediction.answer_box else None,
            mode=req.mode,
            ablation=req.ablation,
            matched_region_ids=list(prediction.matched_region_ids),
            raw_model_output=prediction.raw_model_output,
            wall_time_ms=prediction.wall_time_ms,
            annotated_path=annotated_path,
        )

    @app.post("/eval", response_model=schemas.EvalResponse)
    def run_eval(req: schemas.EvalRequest):
        corpus = load_corpus(req.dataset_root, req.format, req.split)
        cfg = _pipeline_config(
            req.mode,
            req.ablation,
            req.backends,
            req.prompt_set_path,
            dataset_root=req.dataset_root,
            corpus=corpus,
        )
        opts = EvalOptions(
            out_dir=req.out_dir,
            workers=req.workers,
            cache_dir=req.cache_dir,
            resume=req.resume,
            anls=AnlsConfig(threshold=req.anls_threshold),
            text_gated=req.text_gated,
            split=req.split,
            annotate=req.annotate,
        )
        report = evaluate(corpus, cfg, opts)
        manifest = read_manifest(req.out_dir)
        return schemas.EvalResponse(
            report=report.to_json_dict(),
            table=metrics_table({corpus.provenance: report}),
            degraded=manifest["degraded"],
            model_calls=manifest["model_calls"],
            out_dir=req.out_dir,
        )

    @app.post("/score", response_model=schemas.ScoreResponse)
    def score(req: schemas.ScoreRequest):
        corpus = load_corpus(req.dataset_root, req.format, req.split)
        report = score_offline(
            req.predictions,
            corpus,
            AnlsConfig(threshold=req.anls_threshold),
            req.text_gated,
        )
        table = metrics_table({corpus.provenance: report})
        if req.report_out:
            out = Path(req.report_out)
            out.mkdir(parents=True, exist_ok=True)
            (out / "report.json").write_text(report.canonical_json(), encoding="utf-8")
            (out / "report.txt").write_text(table, encoding="utf-8")
        return schemas.ScoreResponse(report=report.to_json_dict(), table=table)

    @app.post("/ablate", response_model=schemas.AblateResponse)
    def ablate(req: schemas.AblateRequest):
        corpus = load_corpus(req.dataset_root, req.format, req.split)
        cfg = _pipeline_config(
            "ocr-free",
            "none",
            req.backends,
            req.prompt_set_path,
            dataset_root=req.dataset_root,
            corpus=corpus,
        )
        opts = EvalOptions(
            out_dir=req.out_dir,
            workers=req.workers,
            cache_dir=req.cache_dir,
            anls=AnlsConfig(threshold=req.anls_threshold),
            split=req.split,
        )
        reports = ablation_suite(corpus, cfg, opts)
        calls = {
            name: read_manifest(Path(req.out_dir) / name)["model_calls"]
            for name in reports
        }
        return schemas.AblateResponse(
            variants={
                name: {
                    "aggregate_anls": r.aggregate_anls,
                    "map_iou": r.map_iou,
                    "model_calls": calls[name],
                }
                for name, r in reports.items()
            },
            table=ablation_table(reports, calls, corpus.provenance),
            out_dir=req.out_dir,
        )

    return app


app = create_app()
