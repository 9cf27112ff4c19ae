"""Cross-encoder fine-tuning on table-evidence data, plus a serving shim
implementing the POST /rerank scoring contract."""

from .data import (
    BuildResult,
    Passage,
    TrainingExample,
    build_training_set,
    is_table_passage,
    load_corpus,
)
from .loss import compute_loss
from .model import HashedCrossEncoder
from .train import TrainerConfig, TrainingArtifact, train

__all__ = [
    "BuildResult",
    "Passage",
    "TrainingExample",
    "build_training_set",
    "is_table_passage",
    "load_corpus",
    "compute_loss",
    "HashedCrossEncoder",
    "TrainerConfig",
    "TrainingArtifact",
    "train",
]
