"""Directory-vs-directory evaluation producing an EvalReport."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor

from .. import __version__
from ..errors import BfrBenchError, ParameterError
from ..harness.imageio import load_image
from ..harness.report import METRIC_COLUMNS, EvalReport
from .fullref import ms_ssim, psnr, ssim
from .niqe import NiqeModel, niqe
from .taskdriven import afics, afld, read_embeddings, read_landmarks

_IMAGE_SUFFIXES = (".ppm", ".pgm", ".png")


def _by_stem(directory) -> dict[str, str]:
    directory = os.fspath(directory)
    out = {}
    for name in sorted(os.listdir(directory)):
        if name.lower().endswith(_IMAGE_SUFFIXES):
            out[os.path.splitext(name)[0]] = os.path.join(directory, name)
    return out


def evaluate(restored_dir, gt_dir, metrics,
             landmarks: tuple | None = None,
             embeddings: tuple | None = None,
             niqe_model: NiqeModel | None = None,
             msssim_scales: int = 5,
             threads: int = 1) -> EvalReport:
    """Compute the requested metrics for every filename-stem pair.

    `landmarks` / `embeddings` are (restored_file, gt_file) path pairs for the
    task-driven metrics. Unpaired images and per-image failures land in the
    report's error list; each metric value missing for an image stays empty.
    """
    metrics = list(metrics)
    unknown = [m for m in metrics if m not in METRIC_COLUMNS]
    if unknown:
        raise ParameterError(f"unknown metrics {unknown}; expected subset of {METRIC_COLUMNS}")
    if "afld" in metrics and landmarks is None:
        raise ParameterError("afld requested but no landmark files supplied")
    if "afics" in metrics and embeddings is None:
        raise ParameterError("afics requested but no embedding files supplied")
    if "niqe" in metrics and niqe_model is None:
        raise ParameterError("niqe requested but no pristine model supplied")

    restored = _by_stem(restored_dir)
    gt = _by_stem(gt_dir)
    report = EvalReport(metadata={
        "toolkit_version": __version__,
        "config_hash": hashlib.sha256(json.dumps(
            {"metrics": sorted(metrics), "msssim_scales": msssim_scales},
            sort_keys=True).encode()).hexdigest()[:16],
    })
    for stem in sorted(set(restored) - set(gt)):
        report.errors.append(f"{stem}: restored image has no ground-truth pair")
    for stem in sorted(set(gt) - set(restored)):
        report.errors.append(f"{stem}: ground-truth image has no restored pair")

    lm_restored = read_landmarks(landmarks[0]) if landmarks else {}
    lm_gt = read_landmarks(landmarks[1]) if landmarks else {}
    emb_restored = read_embeddings(embeddings[0]) if embeddings else {}
    emb_gt = read_embeddings(embeddings[1]) if embeddings else {}

    def run_one(stem: str):
        row: dict = {"id": stem}
        errors: list[str] = []
        img_r = load_image(restored[stem])
        img_g = load_image(gt[stem])
        if img_r.shape != img_g.shape:
            return None, [f"{stem}: shape mismatch {img_r.shape} vs {img_g.shape}"]
        for metric in metrics:
            try:
                if metric == "psnr":
                    row[metric] = psnr(img_r, img_g).value
                elif metric == "ssim":
                    row[metric] = ssim(img_r, img_g).value
                elif metric == "ms_ssim":
                    row[metric] = ms_ssim(img_r, img_g, scales=msssim_scales).value
                elif metric == "niqe":
                    row[metric] = niqe(img_r, niqe_model).value
                elif metric == "afld":
                    if stem not in lm_restored or stem not in lm_gt:
                        errors.append(f"{stem}: afld skipped, no landmarks for this id")
                        continue
                    h, w = img_g.shape[:2]
                    row[metric] = afld(lm_restored[stem], lm_gt[stem], w, h).value
                elif metric == "afics":
                    if stem not in emb_restored or stem not in emb_gt:
                        errors.append(f"{stem}: afics skipped, no embedding for this id")
                        continue
                    row[metric] = afics(emb_restored[stem], emb_gt[stem]).value
            except BfrBenchError as exc:
                errors.append(f"{stem}: {metric} failed: {exc}")
        return row, errors

    stems = sorted(set(restored) & set(gt))
    if threads > 1 and len(stems) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_one, stems))
    else:
        results = [run_one(s) for s in stems]
    for (row, errors), stem in zip(results, stems):
        if row is not None:
            report.rows.append(row)
        report.errors.extend(errors)
    report.rows.sort(key=lambda r: r["id"])
    report.compute_aggregates()
    return report
