"""Training-set construction: corpus loading, page chunking, table
detection, and negative sampling."""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field

MAX_CHUNK_CHARS = 1024

_NUMERIC_TOKEN = re.compile(r"^[$(\[]?[-+]?[\d,]*\d(?:\.\d+)?[%)\]]?$")
_MULTI_SPACE = re.compile(r"  +")


@dataclass(frozen=True)
class Passage:
    doc_id: str
    page_no: int
    chunk_index: int
    text: str

    @property
    def company(self) -> str:
        return self.doc_id.split("_", 1)[0]


@dataclass
class TrainingExample:
    question: str
    positive: Passage
    negatives: list[Passage]

    def __post_init__(self):
        if any(n == self.positive for n in self.negatives):
            raise ValueError("a negative duplicates the positive passage")
        if any(
            n.doc_id == self.positive.doc_id and n.page_no == self.positive.page_no
            for n in self.negatives
        ):
            raise ValueError("a negative comes from the evidence page")


@dataclass
class BuildResult:
    examples: list[TrainingExample]
    skipped: int


def chunk_text(text: str, limit: int = MAX_CHUNK_CHARS) -> list[str]:
    """Pack whole lines into chunks of at most `limit` characters.

    A single line longer than the limit is hard-split.
    """
    chunks: list[str] = []
    current: list[str] = []
    size = 0
    for line in text.splitlines(keepends=True):
        while len(line) > limit:
            if current:
                chunks.append("".join(current))
                current, size = [], 0
            chunks.append(line[:limit])
            line = line[limit:]
        if line and size + len(line) > limit:
            chunks.append("".join(current))
            current, size = [], 0
        if line:
            current.append(line)
            size += len(line)
    if current:
        chunks.append("".join(current))
    return chunks


def load_corpus(path: str) -> dict[str, list[Passage]]:
    """Read a page-separated JSONL corpus into per-document passages."""
    docs: dict[str, list[Passage]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            doc_id = str(raw["doc_id"])
            passages: list[Passage] = []
            for page in raw["pages"]:
                for i, chunk in enumerate(chunk_text(str(page["text"]))):
                    passages.append(
                        Passage(doc_id, int(page["page_no"]), i, chunk)
                    )
            docs[doc_id] = passages
    return docs


def is_table_passage(text: str) -> bool:
    """Heuristic for table-bearing text.

    Either at least 30% of the non-whitespace lines carry three or more
    numeric tokens, or at least five lines each contain two or more runs
    of consecutive spaces (column gutters).
    """
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        return False
    numeric_lines = 0
    guttered_lines = 0
    for line in lines:
        tokens = line.split()
        if sum(1 for t in tokens if _NUMERIC_TOKEN.match(t)) >= 3:
            numeric_lines += 1
        if len(_MULTI_SPACE.findall(line)) >= 2:
            guttered_lines += 1
    if numeric_lines / len(lines) >= 0.30:
        return True
    return guttered_lines >= 5


def build_training_set(
    annotated_qa: list[tuple[str, str, int]],
    corpus: dict[str, list[Passage]],
    n_neg: int = 8,
    seed: int = 0,
) -> BuildResult:
    """Turn (question, doc_id, evidence_page) annotations into examples.

    Positives are the table passages on the evidence page. Negatives are
    sampled uniformly without replacement from table passages on other
    pages of the same document, topped up from other documents of the
    same company when the document has too few. Annotations whose
    evidence page has no table passage are skipped (counted, not fatal).
    """
    if n_neg < 1:
        raise ValueError("n_neg must be >= 1")
    rng = random.Random(seed)
    table_cache: dict[str, list[Passage]] = {
        doc_id: [p for p in passages if is_table_passage(p.text)]
        for doc_id, passages in corpus.items()
    }
    examples: list[TrainingExample] = []
    skipped = 0
    for question, doc_id, evidence_page in annotated_qa:
        if doc_id not in corpus:
            raise KeyError(f"unknown doc_id: {doc_id}")
        if not any(p.page_no == evidence_page for p in corpus[doc_id]):
            raise KeyError(f"page {evidence_page} not in {doc_id}")
        doc_tables = table_cache[doc_id]
        positives = [p for p in doc_tables if p.page_no == evidence_page]
        if not positives:
            skipped += 1
            continue
        in_doc_pool = [p for p in doc_tables if p.page_no != evidence_page]
        negatives = rng.sample(in_doc_pool, min(n_neg, len(in_doc_pool)))
        if len(negatives) < n_neg:
            company = doc_id.split("_", 1)[0]
            cross_pool = [
                p
                for other_id, tables in sorted(table_cache.items())
                if other_id != doc_id and other_id.split("_", 1)[0] == company
                for p in tables
            ]
            top_up = rng.sample(
                cross_pool, min(n_neg - len(negatives), len(cross_pool))
            )
            negatives = negatives + top_up
        for positive in positives:
            examples.append(TrainingExample(question, positive, list(negatives)))
    return BuildResult(examples=examples, skipped=skipped)


def load_training_jsonl(path: str, corpus: dict[str, list[Passage]]) -> list[TrainingExample]:
    """Read pre-built training data referencing passages by
    (doc_id, page_no, chunk_index)."""
    lookup = {
        (p.doc_id, p.page_no, p.chunk_index): p
        for passages in corpus.values()
        for p in passages
    }

    def resolve(ref: dict) -> Passage:
        key = (str(ref["doc_id"]), int(ref["page_no"]), int(ref["chunk_index"]))
        if key not in lookup:
            raise KeyError(f"unknown passage ref: {key}")
        return lookup[key]

    examples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            examples.append(
                TrainingExample(
                    question=str(raw["question"]),
                    positive=resolve(raw["positive"]),
                    negatives=[resolve(r) for r in raw["negatives"]],
                )
            )
    return examples
