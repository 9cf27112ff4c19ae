"""Prompt template loading, with optional per-file overrides on disk."""
from __future__ import annotations

import importlib.resources
from pathlib import Path

_NAMES = (
    "summarize",
    "transform",
    "curate",
    "generate_pot_system",
    "generate_pot_user",
    "generate_cot_system",
    "generate_cot_user",
    "judge",
)


class PromptLibrary:
    """Resolves prompt templates, preferring files in an override directory."""

    def __init__(self, override_dir: str | None = None):
        self._override_dir = Path(override_dir) if override_dir else None
        self._cache: dict[str, str] = {}

    def get(self, name: str) -> str:
        if name not in _NAMES:
            raise KeyError(f"unknown prompt: {name}")
        if name in self._cache:
            return self._cache[name]
        text = None
        if self._override_dir is not None:
            candidate = self._override_dir / f"{name}.txt"
            if candidate.is_file():
                text = candidate.read_text(encoding="utf-8")
        if text is None:
            text = (
                importlib.resources.files(__package__)
                .joinpath(f"{name}.txt")
                .read_text(encoding="utf-8")
            )
        self._cache[name] = text
        return text

    def render(self, name: str, **fields: str) -> str:
        return self.get(name).format(**fields)
