"""Fine-tuning loop: per-epoch checkpoints, loss curve, resumability."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import torch

from .data import TrainingExample
from .loss import torch_group_loss
from .model import HashedCrossEncoder, parse_base_model


@dataclass
class TrainerConfig:
    n_neg: int = 8
    batch_size: int = 128
    epochs: int = 3
    learning_rate: float = 2e-7
    base_model: str = "hashed-overlap-1024"

    def __post_init__(self):
        if self.n_neg < 1:
            raise ValueError("n_neg must be >= 1")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TrainingArtifact:
    model: HashedCrossEncoder
    loss_curve: list[float] = field(default_factory=list)
    checkpoint_paths: list[str] = field(default_factory=list)


def _featurize_groups(
    model: HashedCrossEncoder, training_set: list[TrainingExample]
) -> list[tuple[torch.Tensor, torch.Tensor]]:
    groups = []
    for example in training_set:
        pos = model.featurize(example.question, example.positive.text)
        negs = torch.stack(
            [model.featurize(example.question, n.text) for n in example.negatives]
        )
        groups.append((pos, negs))
    return groups


def train(
    config: TrainerConfig,
    training_set: list[TrainingExample],
    out_dir: str | None = None,
    resume_from: str | None = None,
) -> TrainingArtifact:
    """Fine-tune the base cross-encoder with the grouped BCE objective.

    Writes one checkpoint per epoch under out_dir and records the mean
    per-example loss of each epoch. With epochs=0 the artifact is the
    (possibly resumed) base model untouched.
    """
    if not training_set:
        raise ValueError("training set is empty")
    if resume_from:
        model = HashedCrossEncoder.load(resume_from)
    else:
        model = HashedCrossEncoder(n_features=parse_base_model(config.base_model))
    # Features do not depend on the weights, so compute them once.
    groups = _featurize_groups(model, training_set)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    artifact = TrainingArtifact(model=model)
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for epoch in range(1, config.epochs + 1):
        model.train()
        epoch_loss = 0.0
        for start in range(0, len(groups), config.batch_size):
            batch = groups[start : start + config.batch_size]
            optimizer.zero_grad()
            losses = []
            for pos_features, neg_features in batch:
                pos_score = torch.sigmoid(model(pos_features))
                neg_scores = torch.sigmoid(model(neg_features))
                losses.append(torch_group_loss(pos_score, neg_scores))
            batch_loss = torch.stack(losses).sum()
            batch_loss.backward()
            optimizer.step()
            epoch_loss += float(batch_loss.detach())
        artifact.loss_curve.append(epoch_loss / len(groups))
        if out:
            path = str(out / f"checkpoint_epoch{epoch}.pt")
            model.save(path)
            artifact.checkpoint_paths.append(path)
    return artifact


def mean_positive_rank(
    model: HashedCrossEncoder, held_out: list[TrainingExample]
) -> float:
    """Mean rank of the positive among its group (1 is best); a tied
    negative counts ahead of the positive."""
    if not held_out:
        raise ValueError("held-out set is empty")
    total = 0.0
    for example in held_out:
        passages = [example.positive.text] + [n.text for n in example.negatives]
        scores = model.score(example.question, passages)
        total += 1 + sum(1 for s in scores[1:] if s >= scores[0])
    return total / len(held_out)
