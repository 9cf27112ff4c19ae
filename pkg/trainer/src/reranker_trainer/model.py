"""A small trainable cross-encoder over hashed query/passage interaction
features, scoring (query, passage) pairs through a sigmoid."""
from __future__ import annotations

import re

import torch
from torch import nn

DEFAULT_N_FEATURES = 1024

_TOKEN = re.compile(r"[a-z0-9]+")
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _fnv1a_64(token: str) -> int:
    value = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        value = ((value ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return value


def parse_base_model(identifier: str) -> int:
    """Base-model identifiers look like 'hashed-overlap-1024'; the last
    field is the feature count."""
    parts = identifier.rsplit("-", 1)
    if len(parts) == 2 and parts[0] == "hashed-overlap" and parts[1].isdigit():
        return int(parts[1])
    raise ValueError(f"unknown base model: {identifier}")


class HashedCrossEncoder(nn.Module):
    """Scores a pair by a linear layer over hashed token-overlap counts.

    The freshly constructed model has zero weights, so every pair scores
    exactly 0.5: a neutral, deterministic starting point for both
    fine-tuning and no-op baselines.
    """

    def __init__(self, n_features: int = DEFAULT_N_FEATURES):
        super().__init__()
        if n_features < 1:
            raise ValueError("n_features must be >= 1")
        self.n_features = n_features
        self.linear = nn.Linear(n_features, 1)
        nn.init.zeros_(self.linear.weight)
        nn.init.zeros_(self.linear.bias)

    def featurize(self, query: str, passage: str) -> torch.Tensor:
        counts = torch.zeros(self.n_features)
        passage_tokens = set(_tokenize(passage))
        for token in _tokenize(query):
            if token in passage_tokens:
                counts[_fnv1a_64(token) % self.n_features] += 1.0
        return counts

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.linear(features).squeeze(-1)

    def score(self, query: str, passages: list[str]) -> list[float]:
        """Sigmoid scores in [0, 1], order-aligned with the input."""
        if not passages:
            return []
        self.eval()
        with torch.no_grad():
            features = torch.stack([self.featurize(query, p) for p in passages])
            return torch.sigmoid(self.forward(features)).tolist()

    def save(self, path: str) -> None:
        torch.save(
            {"n_features": self.n_features, "state_dict": self.state_dict()}, path
        )

    @classmethod
    def load(cls, path: str) -> "HashedCrossEncoder":
        payload = torch.load(path, weights_only=True)
        model = cls(n_features=int(payload["n_features"]))
        model.load_state_dict(payload["state_dict"])
        return model
