"""Control loop: initial hierarchical retrieval, up to max_iters rounds
of curation with complementary retrieval, then one answer generation on
either the filtered set (main pass) or the merged set (fallback).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .backends import ChatExchange, ChatModel, Embedder, Reranker
from .corpus import Corpus, Passage
from .curation import (
    CurationVerdict,
    apply_filter,
    curate,
    merge_candidates,
)
from .errors import CorpusEmpty
from .generation import (
    ExecutorConfig,
    GenerationRequest,
    GenerationResult,
    generate_answer,
)
from .indexer import DocIndex
from .prompts import PromptLibrary
from .retrieval import ScoredDoc, ScoredPassage, hierarchical_retrieve

ANSWER_TYPES = ("numeric_table", "numeric_text", "textual")

_CLASSIFY_PROMPT = (
    "Does answering the following question require numerical calculation?\n"
    "Reply with exactly one word: 'numeric' or 'textual'.\n\n"
    "Question: {question}"
)


@dataclass
class PipelineConfig:
    k_cand_docs: int = 100
    k_docs: int = 5
    k_pass: int = 5
    k_keep: int = 10
    max_iters: int = 3
    temperature: float = 0.01
    reasoning_mode_policy: str = "dataset_type"  # dataset_type | classify | always_pot | always_cot
    chunk_size: int = 1024
    overlap: int = 30

    def __post_init__(self):
        if min(self.k_cand_docs, self.k_docs, self.k_pass, self.k_keep) <= 0:
            raise ValueError("all k parameters must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class Backends:
    embedder: Embedder
    doc_reranker: Reranker
    passage_reranker: Reranker
    chat_small: ChatModel
    chat_generator: ChatModel
    judge: ChatModel | None = None


@dataclass
class RetrievalRecord:
    query_used: str
    refined_query: str
    docs: list[ScoredDoc]
    passages: list[ScoredPassage]


@dataclass
class IterationRecord:
    iteration: int
    verdict: CurationVerdict
    filtered_ids: list[str]
    complementary: RetrievalRecord | None = None


class PipelineTrace:
    """Per-run record of every stage: retrievals, verdicts, exchanges."""

    def __init__(self):
        self.initial_retrieval: RetrievalRecord | None = None
        self.iterations: list[IterationRecord] = []
        self.exchanges: list[ChatExchange] = []
        self.wall_clock: dict[str, float] = {}
        self.retrieval_count = 0
        self.curation_count = 0
        self.generation_count = 0

    def record(self, exchange: ChatExchange) -> None:
        self.exchanges.append(exchange)

    def add_time(self, stage: str, seconds: float) -> None:
        self.wall_clock[stage] = self.wall_clock.get(stage, 0.0) + seconds

    def token_tallies(self) -> dict[str, dict[str, int]]:
        tallies: dict[str, dict[str, int]] = {}
        for ex in self.exchanges:
            bucket = tallies.setdefault(
                ex.stage_label, {"prompt_tokens": 0, "completion_tokens": 0}
            )
            bucket["prompt_tokens"] += ex.prompt_tokens
            bucket["completion_tokens"] += ex.completion_tokens
        return tallies

    def to_dict(self) -> dict:
        def retrieval_dict(r: RetrievalRecord | None):
            if r is None:
                return None
            return {
                "query_used": r.query_used,
                "refined_query": r.refined_query,
                "retrieved_docs": [
                    {
                        "doc_id": d.doc_id,
                        "dense_score": d.dense_score,
                        "rerank_score": d.rerank_score,
                    }
                    for d in r.docs
                ],
                "retrieved_passages": [
                    {"passage_id": sp.passage.passage_id, "score": sp.score}
                    for sp in r.passages
                ],
            }

        return {
            "initial_retrieval": retrieval_dict(self.initial_retrieval),
            "iterations": [
                {
                    "iteration": it.iteration,
                    "verdict": {
                        "answerable": it.verdict.answerable,
                        "parse_ok": it.verdict.parse_ok,
                        "relevant_context_ids": it.verdict.relevant_context_ids,
                        "missing_information": it.verdict.missing_information,
                        "draft_answer": it.verdict.draft_answer,
                        "refined_query": it.verdict.refined_query,
                    },
                    "filtered_ids": it.filtered_ids,
                    "complementary_retrieval": retrieval_dict(it.complementary),
                }
                for it in self.iterations
            ],
            "token_tallies": self.token_tallies(),
            "counts": {
                "retrievals": self.retrieval_count,
                "curations": self.curation_count,
                "generations": self.generation_count,
            },
            "wall_clock": self.wall_clock,
        }


@dataclass
class AnswerResult:
    answer_text: str
    mode: str
    evidence: list[Passage]
    answered_via: str  # main_pass | fallback
    trace: PipelineTrace
    numeric_value: float | None = None


def _pick_mode(
    question: str,
    expected_answer_type: str | None,
    cfg: PipelineConfig,
    backends: Backends,
    trace: PipelineTrace,
) -> str:
    policy = cfg.reasoning_mode_policy
    if policy == "always_pot":
        return "PoT"
    if policy == "always_cot":
        return "CoT"
    if policy == "dataset_type" and expected_answer_type:
        return "CoT" if expected_answer_type == "textual" else "PoT"
    # classify (also the dataset_type fallback when no type is supplied)
    try:
        exchange = backends.chat_small.chat(
            _CLASSIFY_PROMPT.format(question=question),
            stage_label="generate",
            temperature=cfg.temperature,
        )
        trace.record(exchange)
        if "textual" in exchange.response_text.lower():
            return "CoT"
    except Exception:
        pass
    return "PoT"


def run(
    q: str,
    cfg: PipelineConfig,
    corpus: Corpus,
    index: DocIndex,
    backends: Backends,
    executor_cfg: ExecutorConfig | None = None,
    prompts: PromptLibrary | None = None,
    expected_answer_type: str | None = None,
) -> AnswerResult:
    if len(corpus) == 0 or len(index) == 0:
        raise CorpusEmpty("cannot run pipeline on an empty corpus or index")
    prompts = prompts or PromptLibrary()
    executor_cfg = executor_cfg or ExecutorConfig()
    trace = PipelineTrace()

    def retrieve(query: str, is_complementary: bool) -> RetrievalRecord:
        started = time.monotonic()
        rq, docs, scored = hierarchical_retrieve(
            query,
            corpus,
            index,
            backends.embedder,
            backends.doc_reranker,
            backends.passage_reranker,
            backends.chat_small,
            prompts,
            k_cand=cfg.k_cand_docs,
            k_docs=cfg.k_docs,
            k_pass=cfg.k_pass,
            chunk_size=cfg.chunk_size,
            overlap=cfg.overlap,
            is_complementary=is_complementary,
            trace=trace,
            temperature=cfg.temperature,
        )
        trace.add_time("retrieval", time.monotonic() - started)
        trace.retrieval_count += 1
        return RetrievalRecord(query, rq.refined_q, docs, scored)

    initial = retrieve(q, is_complementary=False)
    trace.initial_retrieval = initial
    retrieved: list[Passage] = [sp.passage for sp in initial.passages]

    filtered: list[Passage] = []
    answered_via = "fallback"
    generation_set: list[Passage] | None = None
    for i in range(1, cfg.max_iters + 1):
        candidates = merge_candidates(filtered, retrieved)
        if not candidates:
            break
        started = time.monotonic()
        verdict = curate(
            q, candidates, backends.chat_small, prompts,
            trace=trace, temperature=cfg.temperature,
        )
        trace.add_time("curation", time.monotonic() - started)
        trace.curation_count += 1
        filtered = apply_filter(verdict, candidates, k_keep=cfg.k_keep)
        record = IterationRecord(
            iteration=i,
            verdict=verdict,
            filtered_ids=[p.passage_id for p in filtered],
        )
        trace.iterations.append(record)
        if verdict.answerable:
            answered_via = "main_pass"
            generation_set = filtered
            break
        if not verdict.refined_query:
            # Parse failure: no usable complementary question, go straight
            # to fallback generation on the merged set.
            retrieved = merge_candidates(filtered, retrieved)
            break
        complementary = retrieve(verdict.refined_query, is_complementary=True)
        record.complementary = complementary
        retrieved = merge_candidates(
            filtered, [sp.passage for sp in complementary.passages]
        )

    if generation_set is None:
        generation_set = merge_candidates(filtered, retrieved)

    mode = _pick_mode(q, expected_answer_type, cfg, backends, trace)
    started = time.monotonic()
    result: GenerationResult = generate_answer(
        GenerationRequest(question=q, passages=generation_set, mode=mode),
        backends.chat_generator,
        executor_cfg,
        prompts,
        trace=trace,
        temperature=cfg.temperature,
    )
    trace.add_time("generation", time.monotonic() - started)
    trace.generation_count += 1
    return AnswerResult(
        answer_text=result.answer_text,
        mode=result.mode,
        evidence=generation_set,
        answered_via=answered_via,
        trace=trace,
        numeric_value=result.numeric_value,
    )
