"""FastAPI service wrapping the benchmark core.

Argument-level problems (bad parameters, invalid configs) map to 422;
runtime data problems (unreadable files, size mismatches, failed fits,
non-finite losses) map to 400. The CLI translates 422 to exit code 2 and
other failures to exit code 1.
"""

from __future__ import annotations

import os

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..degradation import synthesize
from ..errors import (BfrBenchError, ConfigError, ContractError,
                      DimensionError, ParameterError)
from ..harness.imageio import load_image, save_image
from ..harness.manifest import read_manifest, split_manifest, write_manifest
from ..harness.report import write_report
from ..metrics import NiqeModel, evaluate, niqe_fit
from ..stunet import (StunetConfig, build, load_checkpoint, restore,
                      save_checkpoint, train)
from . import schemas

_ARGUMENT_ERRORS = (ParameterError, ConfigError, ContractError)


def default_config_for(height: int, width: int) -> StunetConfig:
    """Paper-default architecture sized to the corpus resolution."""
    for window in (8, 4, 2):
        candidate = StunetConfig(input_size=(height, width), window_size=window)
        try:
            candidate.validate()
            return candidate
        except ConfigError:
            continue
    raise ConfigError(
        f"no default window size fits {width}x{height} inputs; pass a config")


def create_app() -> FastAPI:
    app = FastAPI(title="bfrbench", version=__version__)

    @app.exception_handler(BfrBenchError)
    async def _bfr_error(request: Request, exc: BfrBenchError):
        status = 422 if isinstance(exc, _ARGUMENT_ERRORS) else 400
        return JSONResponse(status_code=status,
                            content={"detail": f"{type(exc).__name__}: {exc}"})

    @app.exception_handler(OSError)
    async def _os_error(request: Request, exc: OSError):
        return JSONResponse(status_code=400,
                            content={"detail": f"{type(exc).__name__}: {exc}"})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/degrade", response_model=schemas.DegradeResponse)
    def degrade_endpoint(req: schemas.DegradeRequest):
        rows, errors = synthesize(req.hq_dir, req.setting, req.seed, req.out_dir,
                                  threads=req.threads, strict=req.strict,
                                  chroma=req.chroma)
        if errors:
            with open(os.path.join(req.out_dir, "errors.jsonl"), "w",
                      encoding="utf-8") as fh:
                fh.writelines(line + "\n" for line in errors)
        return {"manifest": os.path.join(req.out_dir, "manifest.jsonl"),
                "images": len(rows), "errors": errors}

    @app.post("/train", response_model=schemas.TrainResponse)
    def train_endpoint(req: schemas.TrainRequest):
        rows = read_manifest(req.manifest)
        if req.split != "all":
            rows = [r for r in rows if r.get("split") == req.split]
        if req.config is not None:
            config = StunetConfig.from_json(req.config)
        else:
            if not rows:
                raise ParameterError("manifest has no usable rows")
            sample = load_image(rows[0]["hq"])
            config = default_config_for(sample.shape[0], sample.shape[1])
        config.validate()
        weights = build(config, seed=req.seed)
        log = train(weights, rows, epochs=req.epochs, lr=req.lr,
                    batch_size=req.batch_size, seed=req.seed,
                    momentum=req.momentum, strict=req.strict)
        save_checkpoint(weights, req.out)
        log_path = req.log or req.out + ".log.jsonl"
        log.write(log_path)
        losses = [r["loss"] for r in log.records]
        return {"checkpoint": req.out, "log": log_path,
                "iterations": len(losses),
                "first_loss": losses[0] if losses else None,
                "final_loss": losses[-1] if losses else None,
                "warnings": log.warnings}

    @app.post("/restore", response_model=schemas.RestoreResponse)
    def restore_endpoint(req: schemas.RestoreRequest):
        weights = load_checkpoint(req.ckpt)
        h, w = weights.config.input_size
        names = sorted(f for f in os.listdir(req.in_dir)
                       if f.lower().endswith((".ppm", ".pgm", ".png")))
        os.makedirs(req.out_dir, exist_ok=True)
        batch, batch_names, done = [], [], 0
        for name in names + [None]:
            if name is not None:
                img = load_image(os.path.join(req.in_dir, name))
                if img.shape[:2] != (h, w):
                    raise DimensionError(
                        f"{name}: size {img.shape[1]}x{img.shape[0]} does not "
                        f"match checkpoint input {w}x{h}")
                batch.append(img.transpose(2, 0, 1))
                batch_names.append(name)
            if batch and (name is None or len(batch) == req.batch_size):
                out = restore(weights, np.stack(batch))
                for img_out, out_name in zip(out, batch_names):
                    save_image(img_out.transpose(1, 2, 0),
                               os.path.join(req.out_dir, out_name))
                done += len(batch)
                batch, batch_names = [], []
        return {"images": done}

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate_endpoint(req: schemas.EvaluateRequest):
        if "afld" in req.metrics and not (req.landmarks and req.gt_landmarks):
            raise ParameterError("afld requires --landmarks and --gt-landmarks files")
        if "afics" in req.metrics and not (req.embeddings and req.gt_embeddings):
            raise ParameterError("afics requires --embeddings and --gt-embeddings files")
        model = NiqeModel.load(req.niqe_model) if req.niqe_model else None
        if "niqe" in req.metrics and model is None:
            raise ParameterError("niqe requires --niqe-model")
        landmark_pair = ((req.landmarks, req.gt_landmarks)
                         if req.landmarks and req.gt_landmarks else None)
        embedding_pair = ((req.embeddings, req.gt_embeddings)
                          if req.embeddings and req.gt_embeddings else None)
        report = evaluate(
            req.restored, req.gt, req.metrics,
            landmarks=landmark_pair, embeddings=embedding_pair,
            niqe_model=model, msssim_scales=req.msssim_scales,
            threads=req.threads)
        csv_path = json_path = None
        if req.out_prefix:
            csv_path = req.out_prefix + ".csv"
            json_path = req.out_prefix + ".json"
            write_report(report, csv_path, json_path)
        return {"images": len(report.rows), "aggregates": report.aggregates,
                "errors": report.errors, "csv": csv_path, "json_report": json_path}

    @app.post("/split", response_model=schemas.SplitResponse)
    def split_endpoint(req: schemas.SplitRequest):
        rows = read_manifest(req.manifest)
        rows = split_manifest(rows, req.train_fraction, req.seed)
        out = req.out or req.manifest
        write_manifest(rows, out)
        n_train = sum(r["split"] == "train" for r in rows)
        return {"manifest": out, "train": n_train, "test": len(rows) - n_train}

    @app.post("/niqe-fit", response_model=schemas.NiqeFitResponse)
    def niqe_fit_endpoint(req: schemas.NiqeFitRequest):
        model = niqe_fit(req.pristine, patch=req.patch,
                         sharpness_quantile=req.quantile)
        model.save(req.out)
        return {"model": req.out, "patch": model.patch,
                "quantile": model.quantile, "corpus_hash": model.corpus_hash}

    return app
