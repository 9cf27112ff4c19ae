"""HTTP serving shim exposing the trained scorer behind the
POST /rerank contract: {"query", "passages"} -> {"scores"}."""
from __future__ import annotations

from fastapi import FastAPI
from pydantic import BaseModel

from .model import HashedCrossEncoder


class RerankRequest(BaseModel):
    query: str
    passages: list[str]


class RerankResponse(BaseModel):
    scores: list[float]


def create_app(model: HashedCrossEncoder) -> FastAPI:
    app = FastAPI(title="reranker-trainer", version="0.1.0")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/rerank", response_model=RerankResponse)
    def rerank(req: RerankRequest) -> RerankResponse:
        return RerankResponse(scores=model.score(req.query, req.passages))

    return app


def create_app_from_checkpoint(path: str) -> FastAPI:
    return create_app(HashedCrossEncoder.load(path))
