"""Engine configuration: TOML file + HIREC_ environment overrides, and
factories that build backend instances from the config tree.
"""
from __future__ import annotations

import copy
import os
import sys
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends import (
    BackendConfig,
    DeterministicChat,
    HashEmbedder,
    HttpChat,
    HttpEmbedder,
    HttpReranker,
    OverlapReranker,
    ScriptFileChat,
)
from .generation import ExecutorConfig
from .pipeline import Backends, PipelineConfig

ENV_PREFIX = "HIREC_"

DEFAULTS: dict[str, Any] = {
    "paths": {
        "corpus": "corpus.jsonl",
        "index_dir": "index",
        "prompts_dir": "",
        "trace_dir": "",
    },
    "backends": {
        "embedder": {
            "type": "mock",
            "dim": 64,
            "endpoint": "",
            "model": "",
            "timeout": 60.0,
            "max_retries": 3,
            "price_in": 0.0,
            "price_out": 0.0,
        },
        "doc_reranker": {
            "type": "mock",
            "endpoint": "",
            "model": "",
            "timeout": 60.0,
            "max_retries": 3,
            "price_in": 0.0,
            "price_out": 0.0,
        },
        "passage_reranker": {
            "type": "mock",
            "endpoint": "",
            "model": "",
            "timeout": 60.0,
            "max_retries": 3,
            "price_in": 0.0,
            "price_out": 0.0,
        },
        "chat_small": {
            "type": "mock",
            "endpoint": "",
            "model": "",
            "timeout": 60.0,
            "max_retries": 3,
            "price_in": 0.0,
            "price_out": 0.0,
            "script": "",
            "prompt_tokens": 100,
            "completion_tokens": 20,
        },
        "chat_generator": {
            "type": "mock",
            "endpoint": "",
            "model": "",
            "timeout": 60.0,
            "max_retries": 3,
            "price_in": 0.0,
            "price_out": 0.0,
            "script": "",
            "prompt_tokens": 100,
            "completion_tokens": 20,
        },
        "judge": {
            "type": "mock",
            "endpoint": "",
            "model": "",
            "timeout": 60.0,
            "max_retries": 3,
            "price_in": 0.0,
            "price_out": 0.0,
            "script": "",
            "prompt_tokens": 100,
            "completion_tokens": 20,
        },
    },
    "pipeline": {
        "k_cand_docs": 100,
        "k_docs": 5,
        "k_pass": 5,
        "k_keep": 10,
        "max_iters": 3,
        "temperature": 0.01,
        "reasoning_mode_policy": "dataset_type",
        "chunk_size": 1024,
        "overlap": 30,
    },
    "executor": {
        "command": [sys.executable],
        "timeout_secs": 10.0,
    },
    "eval": {
        "scale_tolerant": False,
        "parallel": 1,
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _coerce(raw: str, like: Any) -> Any:
    if isinstance(like, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, list):
        return raw.split()
    return raw


def _apply_env(config: dict, environ=os.environ) -> None:
    """Override leaves in place from HIREC_SECTION_KEY env vars.

    Dots in the config path map to underscores, so the env name for
    pipeline.max_iters is HIREC_PIPELINE_MAX_ITERS.
    """

    def walk(node: dict, path: tuple[str, ...]):
        for key, value in list(node.items()):
            here = path + (key,)
            if isinstance(value, dict):
                walk(value, here)
            else:
                env_name = ENV_PREFIX + "_".join(p.upper() for p in here)
                if env_name in environ:
                    node[key] = _coerce(environ[env_name], value)

    walk(config, ())


def load_config(path: str | None = None, environ=os.environ) -> dict:
    config = copy.deepcopy(DEFAULTS)
    if path:
        with open(path, "rb") as fh:
            config = _deep_merge(config, tomllib.load(fh))
    _apply_env(config, environ)
    return config


def _backend_config(section: dict) -> BackendConfig:
    return BackendConfig(
        endpoint_url=section.get("endpoint", ""),
        model_name=section.get("model", ""),
        timeout=float(section.get("timeout", 60.0)),
        max_retries=int(section.get("max_retries", 3)),
        price_per_million_input=float(section.get("price_in", 0.0)),
        price_per_million_output=float(section.get("price_out", 0.0)),
    )


def build_embedder(section: dict):
    if section["type"] == "http":
        return HttpEmbedder(_backend_config(section), dim=int(section["dim"]))
    return HashEmbedder(dim=int(section.get("dim", 64)))


def build_reranker(section: dict):
    if section["type"] == "http":
        return HttpReranker(_backend_config(section))
    return OverlapReranker()


def build_chat(section: dict):
    kind = section["type"]
    if kind == "http":
        return HttpChat(_backend_config(section))
    if kind == "scripted":
        return ScriptFileChat(section["script"])
    return DeterministicChat(
        prompt_tokens=int(section.get("prompt_tokens", 100)),
        completion_tokens=int(section.get("completion_tokens", 20)),
    )


def build_backends(config: dict) -> Backends:
    b = config["backends"]
    return Backends(
        embedder=build_embedder(b["embedder"]),
        doc_reranker=build_reranker(b["doc_reranker"]),
        passage_reranker=build_reranker(b["passage_reranker"]),
        chat_small=build_chat(b["chat_small"]),
        chat_generator=build_chat(b["chat_generator"]),
        judge=build_chat(b["judge"]) if b.get("judge") else None,
    )


def build_pipeline_config(config: dict) -> PipelineConfig:
    p = config["pipeline"]
    return PipelineConfig(
        k_cand_docs=int(p["k_cand_docs"]),
        k_docs=int(p["k_docs"]),
        k_pass=int(p["k_pass"]),
        k_keep=int(p["k_keep"]),
        max_iters=int(p["max_iters"]),
        temperature=float(p["temperature"]),
        reasoning_mode_policy=str(p["reasoning_mode_policy"]),
        chunk_size=int(p["chunk_size"]),
        overlap=int(p["overlap"]),
    )


def build_executor_config(config: dict) -> ExecutorConfig:
    e = config["executor"]
    return ExecutorConfig(
        command=list(e["command"]),
        timeout_secs=float(e["timeout_secs"]),
    )


def eval_prices(config: dict) -> dict[str, tuple[float, float]]:
    b = config["backends"]
    return {
        "retrieval": (
            float(b["chat_small"]["price_in"]),
            float(b["chat_small"]["price_out"]),
        ),
        "generation": (
            float(b["chat_generator"]["price_in"]),
            float(b["chat_generator"]["price_out"]),
        ),
    }
