"""Hierarchical retrieval: query transform, dense document retrieval,
document rerank, then passage scoring inside the selected documents.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .backends import ChatModel, Embedder, Reranker
from .corpus import Corpus, Passage, render_passage
from .errors import HirecError
from .indexer import DocIndex
from .prompts import PromptLibrary

DEFAULT_K_CAND_DOCS = 100
DEFAULT_K_DOCS = 5
DEFAULT_K_PASS = 5

_QUERY_HEADER = re.compile(r"^##\s*Query:\s*(.+)$", re.IGNORECASE | re.MULTILINE)


@dataclass
class RetrievalQuery:
    original_q: str
    refined_q: str
    is_complementary: bool = False

    def __post_init__(self):
        if not self.refined_q:
            self.refined_q = self.original_q


@dataclass
class ScoredDoc:
    doc_id: str
    dense_score: float
    rerank_score: float | None = None


@dataclass
class ScoredPassage:
    passage: Passage
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"passage score outside [0, 1]: {self.score}")


def transform_query(
    q: str,
    chat: ChatModel,
    prompts: PromptLibrary,
    is_complementary: bool = False,
    trace=None,
    temperature: float = 0.01,
) -> RetrievalQuery:
    """Rewrite the question into a retrieval query; fall back to q itself."""
    if not q:
        raise ValueError("question must be nonempty")
    refined = q
    try:
        exchange = chat.chat(
            prompts.render("transform", question=q),
            stage_label="transform",
            temperature=temperature,
        )
        if trace is not None:
            trace.record(exchange)
        refined = _parse_refined(exchange.response_text) or q
    except HirecError:
        pass
    return RetrievalQuery(original_q=q, refined_q=refined, is_complementary=is_complementary)


def _parse_refined(text: str) -> str | None:
    match = _QUERY_HEADER.search(text)
    if match:
        value = match.group(1).strip()
        return value or None
    stripped = text.strip()
    if stripped and "\n" not in stripped:
        return stripped
    return None


def dense_retrieve(
    rq: RetrievalQuery,
    index: DocIndex,
    embedder: Embedder,
    k_cand: int = DEFAULT_K_CAND_DOCS,
) -> list[ScoredDoc]:
    """Exact dot-product top-k over all indexed documents.

    Ties break by ascending doc_id for reproducibility.
    """
    if len(index) == 0:
        raise ValueError("index is empty")
    if k_cand < 1:
        raise ValueError("k_cand must be >= 1")
    query_vec = np.asarray(embedder.embed([rq.refined_q])[0].values, dtype=np.float64)
    scores = index.matrix() @ query_vec
    ranked = sorted(
        (ScoredDoc(doc_id, float(score)) for (doc_id, _), score in zip(index.entries, scores)),
        key=lambda d: (-d.dense_score, d.doc_id),
    )
    return ranked[: min(k_cand, len(ranked))]


def rerank_docs(
    rq: RetrievalQuery,
    cands: list[ScoredDoc],
    index: DocIndex,
    reranker: Reranker,
    k_docs: int = DEFAULT_K_DOCS,
) -> list[ScoredDoc]:
    """Cross-encode (refined query, cover summary) and keep the top k_docs."""
    if not cands:
        raise ValueError("candidate list must be nonempty")
    summaries = [index.summaries[c.doc_id].summary_text for c in cands]
    scores = reranker.rerank_score(rq.refined_q, summaries)
    rescored = [
        ScoredDoc(c.doc_id, c.dense_score, rerank_score=s) for c, s in zip(cands, scores)
    ]
    rescored.sort(key=lambda d: (-d.rerank_score, d.doc_id))
    return rescored[: min(k_docs, len(rescored))]


def retrieve_passages(
    original_q: str,
    docs: list[ScoredDoc],
    corpus: Corpus,
    passage_reranker: Reranker,
    k_pass: int = DEFAULT_K_PASS,
    chunk_size: int = 1024,
    overlap: int = 30,
) -> list[ScoredPassage]:
    """Score every passage of the selected documents against the ORIGINAL
    question and return the global top k_pass across documents."""
    if not docs:
        raise ValueError("docs must be nonempty")
    passages: list[Passage] = []
    for doc in docs:
        passages.extend(corpus.passages(doc.doc_id, chunk_size, overlap))
    if not passages:
        return []
    rendered = [render_passage(p) for p in passages]
    scores = passage_reranker.rerank_score(original_q, rendered)
    scored = [ScoredPassage(p, s) for p, s in zip(passages, scores)]
    scored.sort(key=lambda sp: (-sp.score, sp.passage.passage_id))
    return scored[: min(k_pass, len(scored))]


def hierarchical_retrieve(
    q: str,
    corpus: Corpus,
    index: DocIndex,
    embedder: Embedder,
    doc_reranker: Reranker,
    passage_reranker: Reranker,
    chat: ChatModel,
    prompts: PromptLibrary,
    k_cand: int = DEFAULT_K_CAND_DOCS,
    k_docs: int = DEFAULT_K_DOCS,
    k_pass: int = DEFAULT_K_PASS,
    chunk_size: int = 1024,
    overlap: int = 30,
    is_complementary: bool = False,
    trace=None,
    temperature: float = 0.01,
) -> tuple[RetrievalQuery, list[ScoredDoc], list[ScoredPassage]]:
    """Full transform -> dense -> doc rerank -> passage score composition."""
    rq = transform_query(
        q, chat, prompts, is_complementary=is_complementary, trace=trace,
        temperature=temperature,
    )
    cands = dense_retrieve(rq, index, embedder, k_cand=k_cand)
    top_docs = rerank_docs(rq, cands, index, doc_reranker, k_docs=k_docs)
    top_passages = retrieve_passages(
        rq.original_q, top_docs, corpus, passage_reranker,
        k_pass=k_pass, chunk_size=chunk_size, overlap=overlap,
    )
    return rq, top_docs, top_passages
