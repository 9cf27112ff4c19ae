"""Command-line surface: ingest, index, query, eval, serve.

`query` can run locally against the configured corpus/index or act as a
thin client against a running service (--server).

Exit codes: 0 success, 2 input error, 3 backend error, 4 empty state.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import requests

from .backends import STAGE_LABELS
from .config import (
    build_backends,
    build_executor_config,
    build_pipeline_config,
    eval_prices,
    load_config,
)
from .corpus import ingest_corpus
from .errors import (
    BackendUnavailable,
    CorpusEmpty,
    DuplicateDocId,
    EmptyCorpus,
    HirecError,
    ParseError,
)
from .evaluation import load_dataset, run_eval
from .indexer import build_index, load_index
from .prompts import PromptLibrary
from . import pipeline

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BACKEND = 3
EXIT_EMPTY = 4


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="TOML config file; HIREC_* env vars override it.")
@click.pass_context
def main(ctx, config_path):
    """Hierarchical-retrieval question answering over page-separated corpora."""
    ctx.ensure_object(dict)
    try:
        ctx.obj["config"] = load_config(config_path)
    except (OSError, ValueError) as exc:
        click.echo(f"error: cannot load config: {exc}", err=True)
        ctx.exit(EXIT_INPUT)


def _prompts(config) -> PromptLibrary:
    return PromptLibrary(config["paths"]["prompts_dir"] or None)


@main.command()
@click.argument("corpus_path", type=click.Path())
@click.pass_context
def ingest(ctx, corpus_path):
    """Validate a corpus JSONL file and print its statistics."""
    try:
        corpus = ingest_corpus(corpus_path)
    except (ParseError, DuplicateDocId, EmptyCorpus) as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_INPUT)
    stats = corpus.stats()
    click.echo(f"docs: {stats.docs}")
    click.echo(f"pages: {stats.pages}")
    ctx.exit(EXIT_OK)


@main.command()
@click.pass_context
def index(ctx):
    """Build or incrementally update the document index."""
    config = ctx.obj["config"]
    try:
        corpus = ingest_corpus(config["paths"]["corpus"])
    except (ParseError, DuplicateDocId, EmptyCorpus) as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_INPUT)
    backends = build_backends(config)
    try:
        doc_index = build_index(
            corpus,
            backends.chat_small,
            backends.embedder,
            config["paths"]["index_dir"],
            prompts=_prompts(config),
        )
    except BackendUnavailable as exc:
        click.echo(f"error: backend unavailable: {exc}", err=True)
        ctx.exit(EXIT_BACKEND)
    click.echo(f"indexed: {len(doc_index)} documents")
    click.echo(f"updated: {getattr(doc_index, 'updated_count', len(doc_index))}")
    ctx.exit(EXIT_OK)


@main.command()
@click.argument("question")
@click.option("--answer-type", type=click.Choice(["numeric_table", "numeric_text", "textual"]),
              default=None)
@click.option("--trace", "trace_path", type=click.Path(), default=None,
              help="Write the full run trace to this JSON file.")
@click.option("--server", default=None, help="Query a running service instead of local state.")
@click.pass_context
def query(ctx, question, answer_type, trace_path, server):
    """Answer one question and print the evidence pages used."""
    config = ctx.obj["config"]
    if server:
        try:
            resp = requests.post(
                f"{server.rstrip('/')}/query",
                json={
                    "question": question,
                    "answer_type": answer_type,
                    "include_trace": bool(trace_path),
                },
                timeout=600,
            )
            resp.raise_for_status()
        except requests.RequestException as exc:
            click.echo(f"error: service request failed: {exc}", err=True)
            ctx.exit(EXIT_BACKEND)
        payload = resp.json()
        _print_answer(payload["answer"], payload["answered_via"],
                      [(e["doc_id"], e["page_no"]) for e in payload["evidence"]])
        if trace_path and payload.get("trace") is not None:
            Path(trace_path).write_text(
                json.dumps(payload["trace"], sort_keys=True, indent=2) + "\n",
                encoding="utf-8",
            )
        ctx.exit(EXIT_OK)

    try:
        corpus = ingest_corpus(config["paths"]["corpus"])
        doc_index = load_index(config["paths"]["index_dir"])
    except (ParseError, EmptyCorpus, DuplicateDocId, OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_INPUT)
    if len(doc_index) == 0:
        click.echo("error: index is empty", err=True)
        ctx.exit(EXIT_EMPTY)
    try:
        result = pipeline.run(
            question,
            build_pipeline_config(config),
            corpus,
            doc_index,
            build_backends(config),
            executor_cfg=build_executor_config(config),
            prompts=_prompts(config),
            expected_answer_type=answer_type,
        )
    except CorpusEmpty as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_EMPTY)
    except BackendUnavailable as exc:
        click.echo(f"error: backend unavailable: {exc}", err=True)
        ctx.exit(EXIT_BACKEND)
    except HirecError as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_BACKEND)
    _print_answer(
        result.answer_text,
        result.answered_via,
        [(p.doc_id, p.page_no) for p in result.evidence],
    )
    if trace_path:
        Path(trace_path).write_text(
            json.dumps(result.trace.to_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
    ctx.exit(EXIT_OK)


def _print_answer(answer, answered_via, evidence_pages):
    click.echo(answer)
    click.echo(f"answered_via: {answered_via}")
    seen = set()
    for doc_id, page_no in evidence_pages:
        if (doc_id, page_no) not in seen:
            seen.add((doc_id, page_no))
            click.echo(f"evidence: {doc_id} p.{page_no}")


@main.command(name="eval")
@click.argument("dataset_path", type=click.Path())
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--parallel", type=int, default=None)
@click.option("--trace-dir", type=click.Path(), default=None)
@click.pass_context
def eval_cmd(ctx, dataset_path, out_dir, parallel, trace_dir):
    """Run the pipeline over a QA dataset and write the report files."""
    config = ctx.obj["config"]
    try:
        examples = load_dataset(dataset_path)
        corpus = ingest_corpus(config["paths"]["corpus"])
        doc_index = load_index(config["paths"]["index_dir"])
    except (ParseError, EmptyCorpus, DuplicateDocId, OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_INPUT)
    if len(doc_index) == 0:
        click.echo("error: index is empty", err=True)
        ctx.exit(EXIT_EMPTY)
    if parallel is None:
        parallel = int(config["eval"].get("parallel", 1))
    report = run_eval(
        examples,
        build_pipeline_config(config),
        corpus,
        doc_index,
        build_backends(config),
        out_dir,
        executor_cfg=build_executor_config(config),
        prompts=_prompts(config),
        parallel=parallel,
        prices=eval_prices(config),
        trace_dir=trace_dir or (config["paths"]["trace_dir"] or None),
        scale_tolerant=bool(config["eval"].get("scale_tolerant", False)),
    )
    click.echo(f"n: {report.n}")
    click.echo(f"answer_accuracy: {report.overall['answer_accuracy']}")
    click.echo(f"page_recall: {report.overall['page_recall']}")
    ctx.exit(EXIT_OK)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.pass_context
def serve(ctx, host, port):
    """Run the HTTP service around the configured corpus and index."""
    import uvicorn

    from .service import create_app

    app = create_app(config=ctx.obj["config"])
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
