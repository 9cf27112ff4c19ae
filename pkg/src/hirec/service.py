"""FastAPI service wrapping the engine for long-running, multi-client
use. The corpus and index are loaded once at startup from the config;
clients submit questions over HTTP.
"""
from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .config import (
    build_backends,
    build_executor_config,
    build_pipeline_config,
    load_config,
)
from .corpus import Corpus, ingest_corpus
from .errors import HirecError
from .evaluation import numeric_match
from .indexer import DocIndex, load_index
from .prompts import PromptLibrary
from . import pipeline


class QueryRequest(BaseModel):
    question: str = Field(min_length=1)
    answer_type: str | None = None  # numeric_table | numeric_text | textual
    include_trace: bool = False


class EvidenceItem(BaseModel):
    passage_id: str
    doc_id: str
    page_no: int


class QueryResponse(BaseModel):
    answer: str
    numeric_value: float | None
    mode: str
    answered_via: str
    evidence: list[EvidenceItem]
    token_tallies: dict[str, dict[str, int]]
    trace: dict | None = None


class StatsResponse(BaseModel):
    docs: int
    pages: int
    indexed_docs: int


class NumericMatchRequest(BaseModel):
    generated: str
    gold: str
    scale_tolerant: bool = False


class NumericMatchResponse(BaseModel):
    match: bool


def create_app(
    config: dict | None = None,
    config_path: str | None = None,
    corpus: Corpus | None = None,
    index: DocIndex | None = None,
) -> FastAPI:
    cfg = config if config is not None else load_config(config_path)
    app = FastAPI(title="hirec", version="0.1.0")

    state = {"corpus": corpus, "index": index}

    def get_corpus() -> Corpus:
        if state["corpus"] is None:
            state["corpus"] = ingest_corpus(cfg["paths"]["corpus"])
        return state["corpus"]

    def get_index() -> DocIndex:
        if state["index"] is None:
            state["index"] = load_index(cfg["paths"]["index_dir"])
        return state["index"]

    backends = build_backends(cfg)
    pipe_cfg = build_pipeline_config(cfg)
    executor_cfg = build_executor_config(cfg)
    prompts = PromptLibrary(cfg["paths"]["prompts_dir"] or None)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/stats", response_model=StatsResponse)
    def stats() -> StatsResponse:
        corpus_stats = get_corpus().stats()
        return StatsResponse(
            docs=corpus_stats.docs,
            pages=corpus_stats.pages,
            indexed_docs=len(get_index()),
        )

    @app.post("/query", response_model=QueryResponse)
    def query(req: QueryRequest) -> QueryResponse:
        try:
            result = pipeline.run(
                req.question,
                pipe_cfg,
                get_corpus(),
                get_index(),
                backends,
                executor_cfg=executor_cfg,
                prompts=prompts,
                expected_answer_type=req.answer_type,
            )
        except HirecError as exc:
            raise HTTPException(status_code=503, detail=str(exc))
        return QueryResponse(
            answer=result.answer_text,
            numeric_value=result.numeric_value,
            mode=result.mode,
            answered_via=result.answered_via,
            evidence=[
                EvidenceItem(
                    passage_id=p.passage_id, doc_id=p.doc_id, page_no=p.page_no
                )
                for p in result.evidence
            ],
            token_tallies=result.trace.token_tallies(),
            trace=result.trace.to_dict() if req.include_trace else None,
        )

    @app.post("/numeric-match", response_model=NumericMatchResponse)
    def numeric(req: NumericMatchRequest) -> NumericMatchResponse:
        return NumericMatchResponse(
            match=numeric_match(req.generated, req.gold, req.scale_tolerant)
        )

    return app
