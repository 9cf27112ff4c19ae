"""Evidence curation: one LLM call that filters passages, judges
answerability, and drafts a complementary question; plus the strict
parser for its '## header:' structured output.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .backends import ChatModel
from .corpus import Passage
from .prompts import PromptLibrary

DEFAULT_K_KEEP = 10

_HEADER = re.compile(r"^\s*##\s*([a-z_]+)\s*:\s*", re.IGNORECASE | re.MULTILINE)
_ID_LIST = re.compile(r"\[([^\]]*)\]")


@dataclass
class CurationVerdict:
    answerable: bool
    relevant_context_ids: list[int]
    raw_text: str
    parse_ok: bool
    missing_information: str | None = None
    draft_answer: str | None = None
    refined_query: str | None = None


@dataclass
class EvidenceState:
    filtered: list[Passage] = field(default_factory=list)
    iteration: int = 0


def fallback_verdict(raw_text: str) -> CurationVerdict:
    return CurationVerdict(
        answerable=False,
        relevant_context_ids=[],
        raw_text=raw_text,
        parse_ok=False,
    )


def render_contexts(candidates: list[Passage]) -> str:
    lines = []
    for i, p in enumerate(candidates, start=1):
        lines.append(f"Context{i} (ID: {i}): Title is {p.title}. Content is {p.content}")
    return "\n".join(lines)


def merge_candidates(previous: list[Passage], new: list[Passage]) -> list[Passage]:
    """Previous filtered passages first, then new ones, deduped by id.

    Keeping the previous set first keeps context ids stable across
    iterations.
    """
    merged: list[Passage] = []
    seen: set[str] = set()
    for p in list(previous) + list(new):
        if p.passage_id not in seen:
            seen.add(p.passage_id)
            merged.append(p)
    return merged


def parse_curation_output(text: str, presented_ids: list[int]) -> CurationVerdict:
    """Total, order-insensitive parser for the curation reply format.

    Unknown context ids are dropped; a missing or unreadable
    'is_answerable' header (or an unanswerable verdict without a
    refined query) degrades to the parse-failure fallback.
    """
    sections: dict[str, str] = {}
    matches = list(_HEADER.finditer(text))
    for i, match in enumerate(matches):
        name = match.group(1).lower()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        sections.setdefault(name, text[match.end():end].strip())

    answerable_raw = sections.get("is_answerable", "").lower()
    if "unanswerable" in answerable_raw:
        answerable = False
    elif "answerable" in answerable_raw:
        answerable = True
    else:
        return fallback_verdict(text)

    def optional(name: str) -> str | None:
        value = sections.get(name, "").strip()
        if not value or value.lower().rstrip(".") == "none":
            return None
        return value

    ids: list[int] = []
    ids_raw = sections.get("answerable_doc_ids", "")
    bracket = _ID_LIST.search(ids_raw)
    if bracket:
        allowed = set(presented_ids)
        for piece in bracket.group(1).split(","):
            piece = piece.strip()
            if re.fullmatch(r"\d+", piece):
                value = int(piece)
                if value in allowed and value not in ids:
                    ids.append(value)

    refined = optional("refined_query")
    if not answerable and not refined:
        return fallback_verdict(text)

    return CurationVerdict(
        answerable=answerable,
        relevant_context_ids=ids,
        raw_text=text,
        parse_ok=True,
        missing_information=optional("missing_information"),
        draft_answer=optional("answer"),
        refined_query=refined,
    )


def curate(
    q: str,
    candidates: list[Passage],
    chat: ChatModel,
    prompts: PromptLibrary,
    trace=None,
    temperature: float = 0.01,
) -> CurationVerdict:
    """Single-call filter / answerability check / complementary question."""
    if not candidates:
        raise ValueError("candidates must be nonempty")
    exchange = chat.chat(
        prompts.render("curate", question=q, contexts=render_contexts(candidates)),
        stage_label="curate",
        temperature=temperature,
    )
    if trace is not None:
        trace.record(exchange)
    presented = list(range(1, len(candidates) + 1))
    return parse_curation_output(exchange.response_text, presented)


def apply_filter(
    verdict: CurationVerdict,
    candidates: list[Passage],
    k_keep: int = DEFAULT_K_KEEP,
) -> list[Passage]:
    """Keep the passages the verdict marked relevant, in verdict order,
    capped at k_keep. On parse failure keep the leading candidates."""
    if not verdict.parse_ok:
        return list(candidates[: min(k_keep, len(candidates))])
    kept = []
    seen: set[int] = set()
    for context_id in verdict.relevant_context_ids:
        if 1 <= context_id <= len(candidates) and context_id not in seen:
            seen.add(context_id)
            kept.append(candidates[context_id - 1])
    return kept[:k_keep]
