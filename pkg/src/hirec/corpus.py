"""Corpus loading and page-local passage chunking.

Documents arrive as page-separated JSONL; chunking never crosses a page
boundary so every passage carries exact (doc_id, page_no) provenance.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import DuplicateDocId, EmptyCorpus, ParseError

FORM_TYPES = ("10-K", "10-Q", "8-K", "other")

DEFAULT_CHUNK_SIZE = 1024
DEFAULT_OVERLAP = 30


@dataclass(frozen=True)
class PageText:
    page_no: int
    text: str

    def __post_init__(self):
        if self.page_no < 1:
            raise ValueError("page_no must be positive")


@dataclass
class DocumentRecord:
    doc_id: str
    ticker: str
    company_name: str
    form_type: str
    fiscal_period: str
    pages: list[PageText]

    def __post_init__(self):
        if not self.pages:
            raise ValueError(f"document {self.doc_id} has no pages")
        nos = [p.page_no for p in self.pages]
        if any(b <= a for a, b in zip(nos, nos[1:])):
            raise ValueError(f"document {self.doc_id} page_no not strictly increasing")
        if self.form_type not in FORM_TYPES:
            self.form_type = "other"

    @property
    def company(self) -> str:
        return self.doc_id.split("_", 1)[0]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for page in self.pages:
            h.update(str(page.page_no).encode())
            h.update(b"\x00")
            h.update(page.text.encode("utf-8"))
            h.update(b"\x01")
        return h.hexdigest()


@dataclass(frozen=True)
class Passage:
    passage_id: str
    doc_id: str
    page_no: int
    chunk_index: int
    title: str
    content: str
    char_span: tuple[int, int]


def make_passage_id(doc_id: str, page_no: int, chunk_index: int) -> str:
    return f"{doc_id}:p{page_no}:c{chunk_index}"


def _is_sentence_end(text: str, i: int) -> bool:
    if text[i] not in ".!?":
        return False
    return i + 1 == len(text) or text[i + 1].isspace()


def chunk_page(
    page: PageText,
    doc_id: str,
    title: str,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
) -> list[Passage]:
    """Greedy left-to-right chunking of one page.

    Each chunk ends at the latest separator boundary at or before
    start + chunk_size, preferring blank line > newline > sentence
    terminator > whitespace > hard cut. The next chunk starts at
    (previous_end - overlap), advanced to the next whitespace when that
    offset lands mid-token (never past the previous end).
    """
    if not (chunk_size > overlap >= 0):
        raise ValueError("require chunk_size > overlap >= 0")
    text = page.text
    if not text:
        return []
    passages: list[Passage] = []
    start = 0
    index = 0
    while True:
        limit = start + chunk_size
        if limit >= len(text):
            end = len(text)
        else:
            end = _find_break(text, start, limit)
        passages.append(
            Passage(
                passage_id=make_passage_id(doc_id, page.page_no, index),
                doc_id=doc_id,
                page_no=page.page_no,
                chunk_index=index,
                title=title,
                content=text[start:end],
                char_span=(start, end),
            )
        )
        if end >= len(text):
            return passages
        # max() guarantees forward progress even when a separator break
        # lands within `overlap` characters of the chunk start.
        start = max(_snap_start(text, end - overlap, end), start + 1)
        index += 1


def _find_break(text: str, start: int, limit: int) -> int:
    window = text[start:limit]
    # Blank line: break just after the last "\n\n" run.
    pos = window.rfind("\n\n")
    if pos > 0:
        return start + pos + 2
    pos = window.rfind("\n")
    if pos > 0:
        return start + pos + 1
    for i in range(limit - 1, start, -1):
        if _is_sentence_end(text, i):
            return i + 1
    for i in range(limit - 1, start, -1):
        if text[i].isspace():
            return i + 1
    return limit


def _snap_start(text: str, candidate: int, prev_end: int) -> int:
    candidate = max(0, candidate)
    if candidate == 0 or candidate >= prev_end:
        return min(candidate, prev_end)
    if text[candidate - 1].isspace() or text[candidate].isspace():
        return candidate
    for i in range(candidate, prev_end):
        if text[i].isspace():
            return i
    return candidate


def render_passage(p: Passage) -> str:
    """Title + single space + content; no leading space when title is empty."""
    if not p.title:
        return p.content
    return f"{p.title} {p.content}"


@dataclass
class CorpusStats:
    docs: int
    pages: int


class Corpus:
    """Immutable collection of documents with a lazy passage cache."""

    def __init__(self, documents: list[DocumentRecord]):
        self._docs: dict[str, DocumentRecord] = {}
        for doc in documents:
            if doc.doc_id in self._docs:
                raise DuplicateDocId(doc.doc_id)
            self._docs[doc.doc_id] = doc
        self._passage_cache: dict[tuple[str, int, int], list[Passage]] = {}

    def __len__(self) -> int:
        return len(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def doc_ids(self) -> list[str]:
        return list(self._docs)

    def get(self, doc_id: str) -> DocumentRecord:
        return self._docs[doc_id]

    def page(self, doc_id: str, page_no: int) -> PageText:
        for p in self._docs[doc_id].pages:
            if p.page_no == page_no:
                return p
        raise KeyError((doc_id, page_no))

    def stats(self) -> CorpusStats:
        return CorpusStats(
            docs=len(self._docs),
            pages=sum(len(d.pages) for d in self._docs.values()),
        )

    def passages(
        self,
        doc_id: str,
        chunk_size: int = DEFAULT_CHUNK_SIZE,
        overlap: int = DEFAULT_OVERLAP,
    ) -> list[Passage]:
        key = (doc_id, chunk_size, overlap)
        cached = self._passage_cache.get(key)
        if cached is None:
            doc = self._docs[doc_id]
            cached = []
            for page in doc.pages:
                cached.extend(chunk_page(page, doc_id, doc.doc_id, chunk_size, overlap))
            self._passage_cache[key] = cached
        return cached


def ingest_corpus(source_path: str) -> Corpus:
    """Load and validate a page-separated JSONL corpus file."""
    documents: list[DocumentRecord] = []
    seen: set[str] = set()
    try:
        fh = open(source_path, encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open corpus file: {exc}")
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {line_no}: invalid JSON ({exc.msg})", line_no)
            try:
                doc = DocumentRecord(
                    doc_id=str(raw["doc_id"]),
                    ticker=str(raw.get("ticker", "")),
                    company_name=str(raw.get("company", "")),
                    form_type=str(raw.get("form_type", "other")),
                    fiscal_period=str(raw.get("period", "")),
                    pages=[
                        PageText(page_no=int(p["page_no"]), text=str(p["text"]))
                        for p in raw["pages"]
                    ],
                )
            except DuplicateDocId:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"line {line_no}: invalid document record ({exc})", line_no)
            if doc.doc_id in seen:
                raise DuplicateDocId(doc.doc_id)
            seen.add(doc.doc_id)
            documents.append(doc)
    if not documents:
        raise EmptyCorpus(f"no documents in {source_path}")
    return Corpus(documents)
