"""Command-line entry points: build-data, train, serve."""
from __future__ import annotations

import json

import click

from .data import build_training_set, load_corpus, load_training_jsonl
from .train import TrainerConfig, train


@click.group()
def main():
    """Fine-tune and serve the passage cross-encoder."""


@main.command("build-data")
@click.argument("corpus_path", type=click.Path(exists=True))
@click.argument("annotations_path", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--n-neg", type=int, default=8)
@click.option("--seed", type=int, default=0)
def build_data(corpus_path, annotations_path, out_path, n_neg, seed):
    """Build training JSONL from (question, doc_id, evidence_page) rows."""
    corpus = load_corpus(corpus_path)
    annotations = []
    with open(annotations_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                raw = json.loads(line)
                annotations.append(
                    (str(raw["question"]), str(raw["doc_id"]), int(raw["page_no"]))
                )
    result = build_training_set(annotations, corpus, n_neg=n_neg, seed=seed)
    with open(out_path, "w", encoding="utf-8") as fh:
        for ex in result.examples:
            ref = lambda p: {
                "doc_id": p.doc_id, "page_no": p.page_no, "chunk_index": p.chunk_index,
            }
            fh.write(
                json.dumps(
                    {
                        "question": ex.question,
                        "positive": ref(ex.positive),
                        "negatives": [ref(n) for n in ex.negatives],
                    }
                )
                + "\n"
            )
    click.echo(f"examples: {len(result.examples)}")
    click.echo(f"skipped: {result.skipped}")


@main.command("train")
@click.argument("corpus_path", type=click.Path(exists=True))
@click.argument("training_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--epochs", type=int, default=3)
@click.option("--batch-size", type=int, default=128)
@click.option("--learning-rate", type=float, default=2e-7)
@click.option("--resume-from", type=click.Path(exists=True), default=None)
def train_cmd(corpus_path, training_path, out_dir, epochs, batch_size,
              learning_rate, resume_from):
    """Fine-tune on pre-built training JSONL and checkpoint per epoch."""
    corpus = load_corpus(corpus_path)
    training_set = load_training_jsonl(training_path, corpus)
    config = TrainerConfig(
        epochs=epochs, batch_size=batch_size, learning_rate=learning_rate
    )
    artifact = train(config, training_set, out_dir=out_dir, resume_from=resume_from)
    for epoch, loss in enumerate(artifact.loss_curve, start=1):
        click.echo(f"epoch {epoch}: mean loss {loss:.6f}")


@main.command("serve")
@click.argument("checkpoint", type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8100)
def serve_cmd(checkpoint, host, port):
    """Serve a checkpoint behind POST /rerank."""
    import uvicorn

    from .serve import create_app_from_checkpoint

    uvicorn.run(create_app_from_checkpoint(checkpoint), host=host, port=port)


if __name__ == "__main__":
    main()
