"""Document-level index: cover-page summaries and their embeddings.

The index persists as three row-aligned files in one directory:
summaries.jsonl, embeddings.bin (magic + dim u32 + count u64 header,
then float32 little-endian rows), and ids.txt. A fingerprints.json
sidecar enables incremental rebuilds keyed by document content hash.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import ChatModel, Embedder, EmbeddingVector
from .corpus import Corpus, DocumentRecord
from .errors import EmptyDocument, HirecError
from .prompts import PromptLibrary

MAGIC = b"HIDX"
FALLBACK_PREFIX_CHARS = 1024


@dataclass
class DocSummary:
    doc_id: str
    summary_text: str
    source: str  # "llm" | "fallback_raw"

    def __post_init__(self):
        if not self.summary_text:
            raise ValueError(f"empty summary for {self.doc_id}")
        if self.source not in ("llm", "fallback_raw"):
            raise ValueError(f"bad summary source: {self.source}")


@dataclass
class DocIndex:
    embedder_dim: int
    entries: list[tuple[str, EmbeddingVector]]
    summaries: dict[str, DocSummary]

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]

    def matrix(self) -> np.ndarray:
        cached = getattr(self, "_matrix", None)
        if cached is None or len(cached) != len(self.entries):
            cached = np.array([v.values for _, v in self.entries], dtype=np.float64)
            self._matrix = cached
        return cached

    def __len__(self) -> int:
        return len(self.entries)


def summarize_cover(
    doc: DocumentRecord, chat: ChatModel, prompts: PromptLibrary, trace=None
) -> DocSummary:
    """Summarize page 1 via the chat model; fall back to its raw prefix."""
    cover = doc.pages[0].text
    if not cover.strip():
        for page in doc.pages[1:]:
            if page.text.strip():
                cover = page.text
                break
        else:
            raise EmptyDocument(f"document {doc.doc_id} has no page text")
    try:
        exchange = chat.chat(
            prompts.render("summarize", text=cover), stage_label="summarize"
        )
        if trace is not None:
            trace.record(exchange)
        return DocSummary(doc.doc_id, exchange.response_text, "llm")
    except HirecError:
        return DocSummary(doc.doc_id, cover[:FALLBACK_PREFIX_CHARS], "fallback_raw")


def build_index(
    corpus: Corpus,
    chat: ChatModel,
    embedder: Embedder,
    index_dir: str,
    prompts: PromptLibrary | None = None,
) -> DocIndex:
    """Build (or incrementally update) the document index on disk.

    Summaries and embeddings are recomputed only for documents whose
    content hash changed since the last build.
    """
    prompts = prompts or PromptLibrary()
    out = Path(index_dir)
    out.mkdir(parents=True, exist_ok=True)
    if len(corpus) == 0:
        raise ValueError("corpus is empty")

    previous: DocIndex | None = None
    old_prints: dict[str, str] = {}
    fp_path = out / "fingerprints.json"
    if fp_path.is_file() and (out / "ids.txt").is_file():
        previous = load_index(index_dir)
        old_prints = json.loads(fp_path.read_text(encoding="utf-8"))
    prev_vectors = dict(previous.entries) if previous else {}
    prev_summaries = previous.summaries if previous else {}

    entries: list[tuple[str, EmbeddingVector]] = []
    summaries: dict[str, DocSummary] = {}
    fingerprints: dict[str, str] = {}
    updated = 0
    for doc_id in sorted(corpus.doc_ids()):
        doc = corpus.get(doc_id)
        digest = doc.content_hash()
        fingerprints[doc_id] = digest
        if (
            old_prints.get(doc_id) == digest
            and doc_id in prev_vectors
            and doc_id in prev_summaries
        ):
            entries.append((doc_id, prev_vectors[doc_id]))
            summaries[doc_id] = prev_summaries[doc_id]
            continue
        summary = summarize_cover(doc, chat, prompts)
        vector = _quantize_f32(embedder.embed([summary.summary_text])[0])
        entries.append((doc_id, vector))
        summaries[doc_id] = summary
        updated += 1

    index = DocIndex(embedder_dim=embedder.dim, entries=entries, summaries=summaries)
    save_index(index, index_dir)
    fp_path.write_text(
        json.dumps(fingerprints, sort_keys=True, indent=0), encoding="utf-8"
    )
    index.updated_count = updated
    return index


def _quantize_f32(vector: EmbeddingVector) -> EmbeddingVector:
    # Stored rows are float32; quantize up front so save/load is bit-exact.
    values = tuple(float(np.float32(v)) for v in vector.values)
    return EmbeddingVector(values, vector.dim)


def save_index(index: DocIndex, index_dir: str) -> None:
    out = Path(index_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summaries.jsonl", "w", encoding="utf-8") as fh:
        for doc_id, _ in index.entries:
            s = index.summaries[doc_id]
            fh.write(
                json.dumps(
                    {"doc_id": s.doc_id, "summary": s.summary_text, "source": s.source},
                    ensure_ascii=False,
                )
                + "\n"
            )
    with open(out / "ids.txt", "w", encoding="utf-8") as fh:
        for doc_id, _ in index.entries:
            fh.write(doc_id + "\n")
    with open(out / "embeddings.bin", "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", index.embedder_dim, len(index.entries)))
        for _, vector in index.entries:
            fh.write(struct.pack(f"<{index.embedder_dim}f", *vector.values))


def load_index(index_dir: str) -> DocIndex:
    out = Path(index_dir)
    ids = (out / "ids.txt").read_text(encoding="utf-8").splitlines()
    with open(out / "embeddings.bin", "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"bad index magic: {magic!r}")
        dim, count = struct.unpack("<IQ", fh.read(12))
        if count != len(ids):
            raise ValueError("ids.txt row count does not match embeddings.bin")
        entries = []
        for doc_id in ids:
            values = struct.unpack(f"<{dim}f", fh.read(4 * dim))
            entries.append((doc_id, EmbeddingVector(tuple(values), dim)))
    summaries: dict[str, DocSummary] = {}
    with open(out / "summaries.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            raw = json.loads(line)
            summaries[raw["doc_id"]] = DocSummary(
                raw["doc_id"], raw["summary"], raw["source"]
            )
    return DocIndex(embedder_dim=dim, entries=entries, summaries=summaries)
