"""Request/response models for the benchmark service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

Setting = Literal["blur", "noise", "jpeg", "lr", "full"]


class HealthResponse(BaseModel):
    status: str
    version: str


class DegradeRequest(BaseModel):
    hq_dir: str
    setting: Setting
    out_dir: str
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    strict: bool = False
    chroma: Literal["444", "420"] = "444"


class DegradeResponse(BaseModel):
    manifest: str
    images: int
    errors: list[str] = []


class TrainRequest(BaseModel):
    manifest: str
    out: str
    epochs: int = Field(default=3, ge=0)
    lr: float = 0.001
    batch_size: int = Field(default=4, ge=1)
    seed: int = 0
    momentum: float = 0.0
    config: Optional[dict] = None
    log: Optional[str] = None
    split: Literal["all", "train", "test"] = "all"
    strict: bool = False


class TrainResponse(BaseModel):
    checkpoint: str
    log: str
    iterations: int
    first_loss: Optional[float] = None
    final_loss: Optional[float] = None
    warnings: list[str] = []


class RestoreRequest(BaseModel):
    ckpt: str
    in_dir: str
    out_dir: str
    batch_size: int = Field(default=8, ge=1)


class RestoreResponse(BaseModel):
    images: int


class EvaluateRequest(BaseModel):
    restored: str
    gt: str
    metrics: list[str] = ["psnr", "ssim", "ms_ssim"]
    landmarks: Optional[str] = None
    gt_landmarks: Optional[str] = None
    embeddings: Optional[str] = None
    gt_embeddings: Optional[str] = None
    niqe_model: Optional[str] = None
    out_prefix: Optional[str] = None
    msssim_scales: int = Field(default=5, ge=1, le=5)
    threads: int = Field(default=1, ge=1)


class EvaluateResponse(BaseModel):
    images: int
    aggregates: dict
    errors: list[str] = []
    csv: Optional[str] = None
    json_report: Optional[str] = None


class SplitRequest(BaseModel):
    manifest: str
    train_fraction: float = Field(default=0.9, gt=0.0, lt=1.0)
    seed: int = 0
    out: Optional[str] = None   # default: rewrite the manifest in place


class SplitResponse(BaseModel):
    manifest: str
    train: int
    test: int


class NiqeFitRequest(BaseModel):
    pristine: str
    out: str
    patch: int = Field(default=32, ge=8)
    quantile: float = Field(default=0.75, ge=0.0, lt=1.0)


class NiqeFitResponse(BaseModel):
    model: str
    patch: int
    quantile: float
    corpus_hash: str
