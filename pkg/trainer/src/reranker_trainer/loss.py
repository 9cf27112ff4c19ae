"""Binary cross-entropy ranking objective over (positive, negatives)
score groups."""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import torch

EPS = 1e-7


def _clamp(value: float) -> float:
    return min(max(value, EPS), 1.0 - EPS)


def compute_loss(pos_score: float, neg_scores: Sequence[float]) -> float:
    """-ln(pos) - sum ln(1 - neg), with scores clamped to [1e-7, 1-1e-7]."""
    loss = -math.log(_clamp(pos_score))
    for score in neg_scores:
        loss -= math.log(1.0 - _clamp(score))
    return loss


def batch_loss_total(groups: Iterable[tuple[float, Sequence[float]]]) -> float:
    """Sum of compute_loss over a batch of (pos, negs) groups."""
    return sum(compute_loss(pos, negs) for pos, negs in groups)


def torch_group_loss(pos_score: torch.Tensor, neg_scores: torch.Tensor) -> torch.Tensor:
    """Differentiable version of compute_loss for one group."""
    pos = pos_score.clamp(EPS, 1.0 - EPS)
    negs = neg_scores.clamp(EPS, 1.0 - EPS)
    return -torch.log(pos) - torch.log(1.0 - negs).sum()
