"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HyperParamsIn(BaseModel):
    sigma: float = 0.5
    mu: float = 1.0
    gamma: float = 1.0
    g: float = Field(default=0.5, ge=0.0, le=1.0)
    k: int = Field(default=5, ge=1)
    seed: int = 0


class PrepareRequest(BaseModel):
    data_path: str
    data_format: str = "csv"
    min_ratings: int = 30
    implicit: bool = False
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    out_dir: str


class PrepareResponse(BaseModel):
    out_dir: str
    num_users: int
    num_items: int
    counts: dict[str, int]


class TrainRequest(BaseModel):
    split_dir: str
    params: HyperParamsIn = HyperParamsIn()
    model_path: str | None = None


class TrainResponse(BaseModel):
    model_path: str
    fit_seconds: float
    num_users: int
    num_items: int


class LoadModelRequest(BaseModel):
    name: str
    model_path: str
    split_dir: str


class ModelInfo(BaseModel):
    name: str
    num_users: int
    num_items: int
    num_clusters: int
    params: HyperParamsIn


class RecommendRequest(BaseModel):
    name: str
    user_id: str
    n: int = Field(default=10, ge=1)


class ScoredItem(BaseModel):
    item_id: str
    score: float


class RecommendResponse(BaseModel):
    user_id: str
    items: list[ScoredItem]
    latency_ms: float
    fallback: bool


class EvaluateRequest(BaseModel):
    name: str
    n_list: list[int] = [10, 50]
    use_validation: bool = False


class EvaluateResponse(BaseModel):
    metrics: dict[int, dict[str, float]]
    num_users_evaluated: int
    num_users_skipped: int
