"""FastAPI service exposing the offline pipeline and online recommendation.

Models are registered by name with ``POST /models/load`` (or implicitly by
``/train``) and then served read-only; scoring a user is a single row-times-
matrix product, so concurrent requests need no locking.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import dataset as ds
from .. import pipeline
from ..engine import GlimgModel, HyperParams, load_model
from ..errors import DataError, GlimgError, ModelFormatError, NumericalError
from . import schemas


class ModelRegistry:
    """Name -> (model, split) pairs held in memory for serving."""

    def __init__(self):
        self._entries: dict[str, tuple[GlimgModel, ds.DatasetSplit]] = {}

    def put(self, name: str, model: GlimgModel, split: ds.DatasetSplit) -> None:
        self._entries[name] = (model, split)

    def get(self, name: str) -> tuple[GlimgModel, ds.DatasetSplit]:
        if name not in self._entries:
            raise HTTPException(status_code=404, detail=f"no model named {name!r} is loaded")
        return self._entries[name]

    def names(self) -> list[str]:
        return sorted(self._entries)


def create_app() -> FastAPI:
    app = FastAPI(title="glimg", version="0.1.0")
    registry = ModelRegistry()
    app.state.registry = registry

    @app.exception_handler(GlimgError)
    async def _glimg_error(request, exc: GlimgError):
        from fastapi.responses import JSONResponse

        status = 422 if isinstance(exc, (DataError, ModelFormatError)) else 500
        if isinstance(exc, NumericalError):
            status = 500
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "models": registry.names()}

    @app.post("/prepare", response_model=schemas.PrepareResponse)
    def prepare(req: schemas.PrepareRequest):
        config = pipeline.RunConfig(
            data_path=req.data_path,
            data_format=req.data_format,
            min_ratings=req.min_ratings,
            implicit=req.implicit,
            ratios=req.ratios,
            split_seed=req.seed,
            out_dir=req.out_dir,
        )
        split = pipeline.prepare(config)
        return schemas.PrepareResponse(
            out_dir=req.out_dir,
            num_users=split.train.num_users,
            num_items=split.train.num_items,
            counts={name: part.nnz for name, part in zip(ds.SPLIT_NAMES, split)},
        )

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        params = HyperParams(**req.params.model_dump())
        config = pipeline.RunConfig(params=params, out_dir=req.split_dir)
        path, timing = pipeline.train(config, model_path=req.model_path)
        return schemas.TrainResponse(
            model_path=str(path),
            fit_seconds=timing["phase_seconds"]["fit"],
            num_users=timing["num_users"],
            num_items=timing["num_items"],
        )

    @app.post("/models/load", response_model=schemas.ModelInfo)
    def load(req: schemas.LoadModelRequest):
        if not Path(req.model_path).exists():
            raise HTTPException(status_code=404, detail=f"no model file at {req.model_path}")
        model = load_model(req.model_path)
        split = ds.read_split(req.split_dir)
        registry.put(req.name, model, split)
        p = model.params
        return schemas.ModelInfo(
            name=req.name,
            num_users=split.train.num_users,
            num_items=split.train.num_items,
            num_clusters=model.assignment.num_clusters,
            params=schemas.HyperParamsIn(
                sigma=p.sigma, mu=p.mu, gamma=p.gamma, g=p.g, k=p.k, seed=p.seed
            ),
        )

    @app.post("/recommend", response_model=schemas.RecommendResponse)
    def recommend(req: schemas.RecommendRequest):
        model, split = registry.get(req.name)
        rec = pipeline.recommend(model, split, req.user_id, req.n)
        return schemas.RecommendResponse(
            user_id=rec.user_id,
            items=[schemas.ScoredItem(item_id=i, score=s) for i, s in rec.items],
            latency_ms=rec.latency_ms,
            fallback=rec.fallback,
        )

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest):
        model, split = registry.get(req.name)
        report = pipeline.evaluate_model(
            model, split, req.n_list, use_validation=req.use_validation
        )
        return schemas.EvaluateResponse(
            metrics=report.metrics,
            num_users_evaluated=report.num_users_evaluated,
            num_users_skipped=report.num_users_skipped,
        )

    return app


app = create_app()
