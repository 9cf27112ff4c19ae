"""Benchmark harness: page-level retrieval metrics, numeric/textual
answer scoring, per-category aggregation, and token/cost accounting.
"""
from __future__ import annotations

import csv
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation, ROUND_DOWN, ROUND_HALF_UP
from pathlib import Path

from .backends import ChatModel
from .corpus import Corpus, Passage
from .errors import ParseError
from .pipeline import AnswerResult, Backends, PipelineConfig, run
from .prompts import PromptLibrary

logger = logging.getLogger(__name__)

ANSWER_TYPES = ("numeric_table", "numeric_text", "textual")
SOURCES = ("finqa", "financebench", "secqa", "other")

RETRIEVAL_STAGES = ("summarize", "transform", "curate")
GENERATION_STAGES = ("generate",)


@dataclass
class QAExample:
    id: str
    question: str
    gold_answer: str
    answer_type: str
    gold_evidence: set[tuple[str, int]]
    source: str = "other"

    def __post_init__(self):
        if self.answer_type not in ANSWER_TYPES:
            raise ValueError(f"bad answer_type: {self.answer_type}")
        if not self.gold_evidence:
            raise ValueError(f"example {self.id} has no gold evidence")
        if self.source not in SOURCES:
            self.source = "other"


def load_dataset(path: str) -> list[QAExample]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                examples.append(
                    QAExample(
                        id=str(raw["id"]),
                        question=str(raw["question"]),
                        gold_answer=str(raw["answer"]),
                        answer_type=str(raw["answer_type"]),
                        gold_evidence={
                            (str(e["doc_id"]), int(e["page_no"]))
                            for e in raw["evidence"]
                        },
                        source=str(raw.get("source", "other")),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"line {line_no}: invalid QA example ({exc})", line_no)
    if not examples:
        raise ParseError("dataset is empty")
    return examples


def page_metrics(
    retrieved: list[Passage], gold: set[tuple[str, int]]
) -> tuple[float, float]:
    """Recall and precision over deduplicated (doc_id, page_no) pairs."""
    if not gold:
        raise ValueError("gold evidence must be nonempty")
    pages = {(p.doc_id, p.page_no) for p in retrieved}
    hit = len(pages & gold)
    recall = hit / len(gold)
    precision = hit / len(pages) if pages else 0.0
    return recall, precision


_PAREN_NEG = re.compile(r"^\((.*)\)$")
_STRIP_CHARS = "$€£¥%"


def _normalize_number(text: str) -> tuple[Decimal, int] | None:
    """Parse a human-formatted numeric literal.

    Returns (value, decimal places in the literal) or None. Handles
    whitespace, currency symbols, thousands separators, percent signs,
    and parenthesized negatives.
    """
    s = text.strip()
    negative = False
    m = _PAREN_NEG.match(s)
    if m:
        negative = True
        s = m.group(1).strip()
    for ch in _STRIP_CHARS:
        s = s.replace(ch, "")
    s = s.replace(",", "").replace(" ", "")
    if not s:
        return None
    try:
        value = Decimal(s)
    except InvalidOperation:
        return None
    if negative:
        value = -value
    exponent = value.as_tuple().exponent
    decimals = max(0, -exponent) if isinstance(exponent, int) else 0
    return value, decimals


def numeric_match(generated: str, gold: str, scale_tolerant: bool = False) -> bool:
    """Numeric equality up to the gold literal's precision.

    The generated value matches if rounding (half away from zero) or
    truncating it to the gold's decimal places reproduces the gold, or
    if the two are equal within relative 1e-9. With scale_tolerant the
    generated value is additionally tried at x100 and /100.
    """
    gold_parsed = _normalize_number(gold)
    gen_parsed = _normalize_number(generated)
    if gold_parsed is None or gen_parsed is None:
        return False
    gold_value, decimals = gold_parsed
    gen_value, _ = gen_parsed
    candidates = [gen_value]
    if scale_tolerant:
        candidates += [gen_value * 100, gen_value / 100]
    quantum = Decimal(1).scaleb(-decimals)
    for value in candidates:
        try:
            if value.quantize(quantum, rounding=ROUND_HALF_UP) == gold_value:
                return True
            if value.quantize(quantum, rounding=ROUND_DOWN) == gold_value:
                return True
        except InvalidOperation:
            # Quantizing cannot represent the value at this precision
            # (huge magnitudes); fall through to the relative check.
            pass
        tolerance = Decimal("1e-9") * max(Decimal(1), abs(gold_value))
        if abs(value - gold_value) <= tolerance:
            return True
    return False


def judge_textual(
    question: str,
    gold: str,
    generated: str,
    context: str,
    chat: ChatModel,
    prompts: PromptLibrary | None = None,
    trace=None,
) -> bool:
    """LLM-judged textual correctness.

    Scan rule: the first occurrence of 'incorrect' anywhere in the reply
    wins (false); otherwise any occurrence of 'correct' means true; an
    unparseable reply is false with a warning.
    """
    prompts = prompts or PromptLibrary()
    exchange = chat.chat(
        prompts.render(
            "judge",
            context=context,
            question=question,
            answer=gold,
            generated=generated,
        ),
        stage_label="judge",
    )
    if trace is not None:
        trace.record(exchange)
    reply = exchange.response_text.lower()
    if "incorrect" in reply:
        return False
    if "correct" in reply:
        return True
    logger.warning("judge reply had no verdict: %r", exchange.response_text[:200])
    return False


def company_error(top1: Passage, gold: set[tuple[str, int]]) -> bool:
    """True iff the top-1 passage's company differs from every gold doc's
    company (company = doc_id prefix before the first underscore)."""
    top_company = top1.doc_id.split("_", 1)[0]
    gold_companies = {doc_id.split("_", 1)[0] for doc_id, _ in gold}
    return top_company not in gold_companies


@dataclass
class QuestionRecord:
    example: QAExample
    answer_text: str = ""
    correct: bool = False
    page_recall: float = 0.0
    page_precision: float = 0.0
    answered_via: str = "fallback"
    mode: str = "PoT"
    n_evidence: int = 0
    company_error: bool = False
    token_tallies: dict = field(default_factory=dict)
    error: str | None = None
    trace_dict: dict | None = None


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


@dataclass
class EvalReport:
    per_category: dict
    per_source: dict
    overall: dict
    costs: dict
    company_error_count: int
    n: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "overall": self.overall,
            "per_category": self.per_category,
            "per_source": self.per_source,
            "costs": self.costs,
            "company_error_count": self.company_error_count,
        }


def _group_row(records: list[QuestionRecord]) -> dict:
    ok = [r for r in records if r.error is None]
    main = [r for r in ok if r.answered_via == "main_pass"]
    return {
        "page_recall": round(100.0 * _mean([r.page_recall for r in ok]), 6),
        "page_precision": round(100.0 * _mean([r.page_precision for r in ok]), 6),
        "answer_accuracy": round(100.0 * _mean([1.0 if r.correct else 0.0 for r in ok]), 6),
        "avg_passages_main": round(_mean([float(r.n_evidence) for r in main]), 6),
        "avg_passages_all": round(_mean([float(r.n_evidence) for r in ok]), 6),
        "n": len(records),
        "n_failed": len(records) - len(ok),
    }


def aggregate(
    records: list[QuestionRecord],
    prices: dict[str, tuple[float, float]] | None = None,
) -> EvalReport:
    """Macro-average metrics per category and per source, plus the
    token/cost table split into retrieval and generation stages."""
    if not records:
        raise ValueError("no records to aggregate")
    records = sorted(records, key=lambda r: r.example.id)
    prices = prices or {"retrieval": (0.0, 0.0), "generation": (0.0, 0.0)}

    per_category = {}
    for category in ANSWER_TYPES:
        group = [r for r in records if r.example.answer_type == category]
        if group:
            per_category[category] = _group_row(group)
    per_source = {}
    for source in SOURCES:
        group = [r for r in records if r.example.source == source]
        if group:
            per_source[source] = _group_row(group)

    totals = {
        "retrieval": {"input": 0, "output": 0},
        "generation": {"input": 0, "output": 0},
    }
    for record in records:
        for stage, tally in record.token_tallies.items():
            if stage in RETRIEVAL_STAGES:
                bucket = totals["retrieval"]
            elif stage in GENERATION_STAGES:
                bucket = totals["generation"]
            else:
                continue
            bucket["input"] += tally["prompt_tokens"]
            bucket["output"] += tally["completion_tokens"]
    costs = {}
    for group, tokens in totals.items():
        in_price, out_price = prices.get(group, (0.0, 0.0))
        costs[group] = {
            "input_tokens": tokens["input"],
            "output_tokens": tokens["output"],
            "input_cost": round(tokens["input"] * in_price / 1_000_000, 10),
            "output_cost": round(tokens["output"] * out_price / 1_000_000, 10),
        }

    return EvalReport(
        per_category=per_category,
        per_source=per_source,
        overall=_group_row(records),
        costs=costs,
        company_error_count=sum(1 for r in records if r.company_error),
        n=len(records),
    )


def evaluate_one(
    example: QAExample,
    cfg: PipelineConfig,
    corpus: Corpus,
    index,
    backends: Backends,
    executor_cfg=None,
    prompts: PromptLibrary | None = None,
    scale_tolerant: bool = False,
) -> QuestionRecord:
    prompts = prompts or PromptLibrary()
    record = QuestionRecord(example=example)
    try:
        result: AnswerResult = run(
            example.question,
            cfg,
            corpus,
            index,
            backends,
            executor_cfg=executor_cfg,
            prompts=prompts,
            expected_answer_type=example.answer_type,
        )
    except Exception as exc:
        record.error = f"{type(exc).__name__}: {exc}"
        return record
    record.answer_text = result.answer_text
    record.answered_via = result.answered_via
    record.mode = result.mode
    record.n_evidence = len(result.evidence)
    recall, precision = page_metrics(result.evidence, example.gold_evidence)
    record.page_recall = recall
    record.page_precision = precision
    initial = result.trace.initial_retrieval
    if initial and initial.passages:
        record.company_error = company_error(
            initial.passages[0].passage, example.gold_evidence
        )
    if example.answer_type == "textual":
        record.correct = _judge_with_context(
            example, result, corpus, backends, prompts, result.trace
        )
    else:
        record.correct = numeric_match(
            result.answer_text, example.gold_answer, scale_tolerant=scale_tolerant
        )
    record.token_tallies = result.trace.token_tallies()
    record.trace_dict = result.trace.to_dict()
    return record


def _judge_with_context(example, result, corpus, backends, prompts, trace) -> bool:
    context_parts = []
    for doc_id, page_no in sorted(example.gold_evidence):
        try:
            context_parts.append(corpus.page(doc_id, page_no).text[:2000])
        except KeyError:
            pass
    context = "\n\n".join(context_parts) or "\n\n".join(
        p.content[:2000] for p in result.evidence
    )
    if backends.judge is None:
        return example.gold_answer.strip().lower() == result.answer_text.strip().lower()
    return judge_textual(
        example.question,
        example.gold_answer,
        result.answer_text,
        context,
        backends.judge,
        prompts=prompts,
        trace=trace,
    )


def run_eval(
    examples: list[QAExample],
    cfg: PipelineConfig,
    corpus: Corpus,
    index,
    backends: Backends,
    out_dir: str,
    executor_cfg=None,
    prompts: PromptLibrary | None = None,
    parallel: int = 1,
    prices: dict[str, tuple[float, float]] | None = None,
    trace_dir: str | None = None,
    scale_tolerant: bool = False,
) -> EvalReport:
    """Run the pipeline over a dataset and write report.json, report.csv,
    costs.csv, and per-question records. Per-question failures are
    recorded, not fatal."""
    prompts = prompts or PromptLibrary()

    def one(example: QAExample) -> QuestionRecord:
        return evaluate_one(
            example, cfg, corpus, index, backends,
            executor_cfg=executor_cfg, prompts=prompts,
            scale_tolerant=scale_tolerant,
        )

    if parallel <= 1:
        records = [one(e) for e in examples]
    else:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            records = list(pool.map(one, examples))
    records.sort(key=lambda r: r.example.id)

    report = aggregate(records, prices=prices)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    _write_report_csv(report, out / "report.csv")
    _write_costs_csv(report, out / "costs.csv")
    with open(out / "questions.jsonl", "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(
                json.dumps(
                    {
                        "id": record.example.id,
                        "answer": record.answer_text,
                        "correct": record.correct,
                        "page_recall": record.page_recall,
                        "page_precision": record.page_precision,
                        "answered_via": record.answered_via,
                        "mode": record.mode,
                        "n_evidence": record.n_evidence,
                        "company_error": record.company_error,
                        "error": record.error,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    if trace_dir:
        tdir = Path(trace_dir)
        tdir.mkdir(parents=True, exist_ok=True)
        for record in records:
            if record.trace_dict is not None:
                (tdir / f"{record.example.id}.json").write_text(
                    json.dumps(record.trace_dict, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8",
                )
    return report


def _write_report_csv(report: EvalReport, path: Path) -> None:
    columns = [
        "group", "name", "page_recall", "page_precision", "answer_accuracy",
        "avg_passages_main", "avg_passages_all", "n",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        rows = (
            [("overall", "all", report.overall)]
            + [("category", k, v) for k, v in report.per_category.items()]
            + [("source", k, v) for k, v in report.per_source.items()]
        )
        for group, name, row in rows:
            writer.writerow(
                [group, name]
                + [row[c] for c in columns[2:]]
            )


def _write_costs_csv(report: EvalReport, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "input_tokens", "output_tokens", "input_cost", "output_cost"])
        for stage in ("retrieval", "generation"):
            row = report.costs[stage]
            writer.writerow(
                [stage, row["input_tokens"], row["output_tokens"],
                 row["input_cost"], row["output_cost"]]
            )
