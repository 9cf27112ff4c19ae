"""Model backends: text embedder, cross-encoder reranker, and chat model.

Each role has an HTTP implementation speaking an OpenAI-compatible (or
plain /rerank) protocol, plus deterministic in-process mocks used by the
test suite and by all-mock evaluation runs.
"""
from __future__ import annotations

import json
import math
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import requests

from .errors import (
    BackendUnavailable,
    DimensionMismatch,
    EmptyResponse,
    MalformedResponse,
)

STAGE_LABELS = ("summarize", "transform", "curate", "generate", "judge")


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int

    def __post_init__(self):
        if len(self.values) != self.dim:
            raise DimensionMismatch(
                f"vector has {len(self.values)} values, expected {self.dim}"
            )
        if not all(math.isfinite(v) for v in self.values):
            raise DimensionMismatch("vector contains non-finite values")

    def dot(self, other: "EmbeddingVector") -> float:
        return sum(a * b for a, b in zip(self.values, other.values))


@dataclass
class ChatExchange:
    user_text: str
    response_text: str
    stage_label: str
    system_text: str | None = None
    temperature: float = 0.01
    prompt_tokens: int = 0
    completion_tokens: int = 0
    tokens_approximate: bool = False

    def __post_init__(self):
        if self.stage_label not in STAGE_LABELS:
            raise ValueError(f"unknown stage_label: {self.stage_label}")
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be nonnegative")


@dataclass
class BackendConfig:
    endpoint_url: str = ""
    model_name: str = ""
    timeout: float = 60.0
    max_retries: int = 3
    price_per_million_input: float = 0.0
    price_per_million_output: float = 0.0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.price_per_million_input < 0 or self.price_per_million_output < 0:
            raise ValueError("prices must be nonnegative")


class Embedder(Protocol):
    dim: int

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


class Reranker(Protocol):
    def rerank_score(self, query: str, passages: Sequence[str]) -> list[float]: ...


class ChatModel(Protocol):
    def chat(
        self,
        user_text: str,
        stage_label: str,
        system_text: str | None = None,
        temperature: float = 0.01,
    ) -> ChatExchange: ...


def _tokenize(text: str) -> list[str]:
    return [t for t in re.split(r"[^0-9a-z]+", text.lower()) if t]


def _fnv1a_64(token: str) -> int:
    h = 0xCBF29CE484222325
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def approx_token_count(text: str) -> int:
    """Rough ceil(chars / 4) fallback when a service omits usage."""
    return -(-len(text) // 4)


class HashEmbedder:
    """Deterministic bag-of-hashed-tokens embedder for tests and mock runs.

    Tokens are lowercased alphanumeric runs; each token increments the
    bucket at FNV-1a-64(token) mod dim; the vector is L2-normalized.
    Empty text maps to the zero vector.
    """

    def __init__(self, dim: int = 64):
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ValueError("texts must be nonempty")
        out = []
        for text in texts:
            buckets = [0.0] * self.dim
            for token in _tokenize(text):
                buckets[_fnv1a_64(token) % self.dim] += 1.0
            norm = math.sqrt(sum(v * v for v in buckets))
            if norm > 0:
                buckets = [v / norm for v in buckets]
            out.append(EmbeddingVector(tuple(buckets), self.dim))
        return out


class OverlapReranker:
    """Lexical-overlap mock reranker: |tokens(q) ∩ tokens(p)| / max(1, |tokens(q)|)."""

    def rerank_score(self, query: str, passages: Sequence[str]) -> list[float]:
        if not query:
            raise ValueError("query must be nonempty")
        q_tokens = set(_tokenize(query))
        scores = []
        for passage in passages:
            p_tokens = set(_tokenize(passage))
            score = len(q_tokens & p_tokens) / max(1, len(q_tokens))
            scores.append(min(1.0, max(0.0, score)))
        return scores


class ScriptedChat:
    """Chat mock replaying FIFO queues of responses, one queue per stage.

    Each queued item is either a plain string or a (text, prompt_tokens,
    completion_tokens) tuple. An exhausted queue raises EmptyResponse.
    """

    def __init__(self, scripts: dict[str, list] | None = None):
        self._queues: dict[str, list] = {s: [] for s in STAGE_LABELS}
        self._lock = threading.Lock()
        self.exchanges: list[ChatExchange] = []
        if scripts:
            for stage, items in scripts.items():
                for item in items:
                    self.push(stage, item)

    def push(self, stage_label: str, item):
        if stage_label not in STAGE_LABELS:
            raise ValueError(f"unknown stage_label: {stage_label}")
        self._queues[stage_label].append(item)

    def chat(self, user_text, stage_label, system_text=None, temperature=0.01):
        if not user_text:
            raise ValueError("user_text must be nonempty")
        with self._lock:
            queue = self._queues[stage_label]
            if not queue:
                raise EmptyResponse(f"scripted queue for stage '{stage_label}' is empty")
            item = queue.pop(0)
        if isinstance(item, str):
            text = item
            p_tok, c_tok = approx_token_count(user_text), approx_token_count(text)
            approximate = True
        else:
            text, p_tok, c_tok = item
            approximate = False
        if not text:
            raise EmptyResponse(f"scripted response for stage '{stage_label}' is empty")
        exchange = ChatExchange(
            user_text=user_text,
            response_text=text,
            stage_label=stage_label,
            system_text=system_text,
            temperature=temperature,
            prompt_tokens=p_tok,
            completion_tokens=c_tok,
            tokens_approximate=approximate,
        )
        self.exchanges.append(exchange)
        return exchange


class DeterministicChat:
    """Stage-aware chat mock that is a pure function of its input.

    Used for all-mock evaluation runs where a scripted queue would be
    awkward: every stage gets a fixed, well-formed reply with fixed token
    usage, so end-to-end runs are reproducible byte for byte.
    """

    def __init__(self, prompt_tokens: int = 100, completion_tokens: int = 20):
        self.prompt_tokens = prompt_tokens
        self.completion_tokens = completion_tokens

    def _reply(self, user_text: str, stage_label: str) -> str:
        if stage_label == "summarize":
            return user_text[-512:].strip() or "empty document"
        if stage_label == "transform":
            # Echo the question line back as the refined query.
            match = re.search(r"## Question:\s*(.+)", user_text)
            q = match.group(1).strip() if match else user_text.strip().splitlines()[-1]
            return f"## Query: {q}"
        if stage_label == "curate":
            n_contexts = len(re.findall(r"\(ID: \d+\)", user_text))
            ids = list(range(1, n_contexts + 1))
            return (
                "## is_answerable: answerable\n"
                "## missing_information: None\n"
                "## answer: None\n"
                f"## answerable_doc_ids: {ids}\n"
                "## refined_query: None"
            )
        if stage_label == "generate":
            if "Python program" in user_text:
                return "```python\ndef solution():\n    answer = 0\n    return answer\n```"
            return "Therefore, the answer is unknown."
        return "incorrect"

    def chat(self, user_text, stage_label, system_text=None, temperature=0.01):
        if not user_text:
            raise ValueError("user_text must be nonempty")
        return ChatExchange(
            user_text=user_text,
            response_text=self._reply(user_text, stage_label),
            stage_label=stage_label,
            system_text=system_text,
            temperature=temperature,
            prompt_tokens=self.prompt_tokens,
            completion_tokens=self.completion_tokens,
        )


def _with_retries(fn, max_retries: int, base_delay: float = 0.25):
    last_exc = None
    for attempt in range(max_retries + 1):
        try:
            return fn()
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_exc = exc
            if attempt < max_retries:
                time.sleep(base_delay * (2**attempt))
    raise BackendUnavailable(f"backend unreachable after {max_retries + 1} attempts: {last_exc}")


class HttpEmbedder:
    """OpenAI-style embeddings endpoint: POST {endpoint}/v1/embeddings."""

    def __init__(self, config: BackendConfig, dim: int, session: requests.Session | None = None):
        self.config = config
        self.dim = dim
        self._session = session or requests.Session()

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ValueError("texts must be nonempty")
        body = {"model": self.config.model_name, "input": list(texts)}

        def call():
            resp = self._session.post(
                f"{self.config.endpoint_url.rstrip('/')}/v1/embeddings",
                json=body,
                timeout=self.config.timeout,
            )
            resp.raise_for_status()
            return resp.json()

        payload = _with_retries(call, self.config.max_retries)
        try:
            rows = [item["embedding"] for item in payload["data"]]
        except (KeyError, TypeError) as exc:
            raise MalformedResponse(f"bad embeddings payload: {exc}")
        if len(rows) != len(texts):
            raise MalformedResponse(f"expected {len(texts)} embeddings, got {len(rows)}")
        vectors = []
        for row in rows:
            if len(row) != self.dim:
                raise DimensionMismatch(f"service returned dim {len(row)}, expected {self.dim}")
            vectors.append(EmbeddingVector(tuple(float(v) for v in row), self.dim))
        return vectors


class HttpReranker:
    """Plain scoring endpoint: POST {endpoint}/rerank with query + passages."""

    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        self.config = config
        self._session = session or requests.Session()

    def rerank_score(self, query: str, passages: Sequence[str]) -> list[float]:
        if not query:
            raise ValueError("query must be nonempty")
        body = {"query": query, "passages": list(passages)}

        def call():
            resp = self._session.post(
                f"{self.config.endpoint_url.rstrip('/')}/rerank",
                json=body,
                timeout=self.config.timeout,
            )
            resp.raise_for_status()
            return resp.json()

        payload = _with_retries(call, self.config.max_retries)
        scores = payload.get("scores")
        if not isinstance(scores, list) or len(scores) != len(passages):
            raise MalformedResponse("score count mismatch from reranker")
        scores = [float(s) for s in scores]
        if any(s < 0.0 or s > 1.0 for s in scores):
            raise MalformedResponse("reranker score outside [0, 1]")
        return scores


class HttpChat:
    """OpenAI-style chat endpoint: POST {endpoint}/v1/chat/completions."""

    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        self.config = config
        self._session = session or requests.Session()

    def chat(self, user_text, stage_label, system_text=None, temperature=0.01):
        if not user_text:
            raise ValueError("user_text must be nonempty")
        messages = []
        if system_text:
            messages.append({"role": "system", "content": system_text})
        messages.append({"role": "user", "content": user_text})
        body = {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": temperature,
        }

        def call():
            resp = self._session.post(
                f"{self.config.endpoint_url.rstrip('/')}/v1/chat/completions",
                json=body,
                timeout=self.config.timeout,
            )
            resp.raise_for_status()
            return resp.json()

        payload = _with_retries(call, self.config.max_retries)
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"bad chat payload: {exc}")
        if not text:
            raise EmptyResponse("chat service returned empty content")
        usage = payload.get("usage") or {}
        p_tok = usage.get("prompt_tokens")
        c_tok = usage.get("completion_tokens")
        approximate = p_tok is None or c_tok is None
        if p_tok is None:
            prompt_chars = len(user_text) + len(system_text or "")
            p_tok = approx_token_count("x" * prompt_chars)
        if c_tok is None:
            c_tok = approx_token_count(text)
        return ChatExchange(
            user_text=user_text,
            response_text=text,
            stage_label=stage_label,
            system_text=system_text,
            temperature=temperature,
            prompt_tokens=int(p_tok),
            completion_tokens=int(c_tok),
            tokens_approximate=approximate,
        )


class ScriptFileChat(ScriptedChat):
    """ScriptedChat loaded from a JSON file: {stage: [entries...]}.

    Entries are strings or {"text", "prompt_tokens", "completion_tokens"}.
    Lets CLI runs replay pinned conversations.
    """

    def __init__(self, path: str):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        scripts: dict[str, list] = {}
        for stage, items in raw.items():
            converted = []
            for item in items:
                if isinstance(item, str):
                    converted.append(item)
                else:
                    converted.append(
                        (
                            item["text"],
                            int(item.get("prompt_tokens", 0)),
                            int(item.get("completion_tokens", 0)),
                        )
                    )
            scripts[stage] = converted
        super().__init__(scripts)
