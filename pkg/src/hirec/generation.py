"""Answer generation: program-of-thought for numeric questions (emit a
program, execute it in a scrubbed subprocess, read the printed value)
and chain-of-thought for textual questions.
"""
from __future__ import annotations

import os
import re
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field

from .backends import ChatModel
from .corpus import Passage, render_passage
from .errors import ExecutionFailed, GenerationFailed, HirecError
from .prompts import PromptLibrary

_CODE_BLOCK = re.compile(r"```(?:[a-zA-Z0-9_+-]*)\n(.*?)```", re.DOTALL)
_ANSWER_MARKER = re.compile(r"the answer is", re.IGNORECASE)

ENV_ALLOWLIST = ("PATH", "HOME", "LANG", "LC_ALL", "SYSTEMROOT", "TMPDIR")


@dataclass
class ExecutorConfig:
    command: list[str] = field(default_factory=lambda: [sys.executable])
    timeout_secs: float = 10.0


@dataclass
class GenerationRequest:
    question: str
    passages: list[Passage]
    mode: str  # "PoT" | "CoT"

    def __post_init__(self):
        if self.mode not in ("PoT", "CoT"):
            raise ValueError(f"bad generation mode: {self.mode}")


@dataclass
class ProgramExecution:
    program_text: str
    stdout: str
    exit_ok: bool
    duration: float
    returned_value: float | None = None
    error_kind: str | None = None  # timeout | nonzero_exit | non_numeric | launch_failure


@dataclass
class GenerationResult:
    answer_text: str
    mode: str
    numeric_value: float | None = None
    extracted: bool = True
    execution: ProgramExecution | None = None


_DRIVER = "\n\nif __name__ == '__main__':\n    print(solution())\n"


def execute_program(program_text: str, cfg: ExecutorConfig) -> ProgramExecution:
    """Run a generated program in an empty temp dir with a scrubbed
    environment; parse the last stdout line as a real number."""
    wrapped = program_text + _DRIVER
    env = {k: v for k, v in os.environ.items() if k in ENV_ALLOWLIST}
    started = time.monotonic()
    with tempfile.TemporaryDirectory(prefix="hirec-exec-") as workdir:
        script = os.path.join(workdir, "program.py")
        with open(script, "w", encoding="utf-8") as fh:
            fh.write(wrapped)
        try:
            proc = subprocess.run(
                cfg.command + [script],
                cwd=workdir,
                env=env,
                capture_output=True,
                text=True,
                timeout=cfg.timeout_secs,
            )
        except subprocess.TimeoutExpired:
            return ProgramExecution(
                program_text=program_text,
                stdout="",
                exit_ok=False,
                duration=time.monotonic() - started,
                error_kind="timeout",
            )
        except (OSError, FileNotFoundError) as exc:
            return ProgramExecution(
                program_text=program_text,
                stdout=str(exc),
                exit_ok=False,
                duration=time.monotonic() - started,
                error_kind="launch_failure",
            )
    duration = time.monotonic() - started
    if proc.returncode != 0:
        return ProgramExecution(
            program_text=program_text,
            stdout=proc.stderr or proc.stdout,
            exit_ok=False,
            duration=duration,
            error_kind="nonzero_exit",
        )
    lines = [ln for ln in proc.stdout.strip().splitlines() if ln.strip()]
    value = None
    if lines:
        try:
            value = float(lines[-1].strip())
        except ValueError:
            value = None
    if value is None:
        return ProgramExecution(
            program_text=program_text,
            stdout=proc.stdout,
            exit_ok=True,
            duration=duration,
            error_kind="non_numeric",
        )
    return ProgramExecution(
        program_text=program_text,
        stdout=proc.stdout,
        exit_ok=True,
        duration=duration,
        returned_value=value,
    )


def extract_code_block(text: str) -> str:
    match = _CODE_BLOCK.search(text)
    if match:
        return match.group(1).strip("\n")
    return text


def extract_cot_answer(text: str) -> tuple[str, bool]:
    """Suffix after the LAST 'the answer is' marker, trimmed of
    surrounding whitespace and a trailing period. No marker: whole text,
    flagged unextracted."""
    matches = list(_ANSWER_MARKER.finditer(text))
    if not matches:
        return text.strip(), False
    answer = text[matches[-1].end():].strip()
    if answer.endswith("."):
        answer = answer[:-1].rstrip()
    return answer, True


def render_sources(passages: list[Passage]) -> str:
    return "\n\n".join(f"Sources: {p.title} - {p.content}" for p in passages)


def format_numeric(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return repr(value)


def generate_answer(
    req: GenerationRequest,
    chat: ChatModel,
    executor_cfg: ExecutorConfig,
    prompts: PromptLibrary,
    trace=None,
    temperature: float = 0.01,
) -> GenerationResult:
    if not req.question:
        raise ValueError("question must be nonempty")
    contexts = render_sources(req.passages)
    if req.mode == "CoT":
        try:
            exchange = chat.chat(
                prompts.render("generate_cot_user", question=req.question, contexts=contexts),
                stage_label="generate",
                system_text=prompts.get("generate_cot_system"),
                temperature=temperature,
            )
        except HirecError as exc:
            raise GenerationFailed(str(exc))
        if trace is not None:
            trace.record(exchange)
        answer, extracted = extract_cot_answer(exchange.response_text)
        return GenerationResult(answer_text=answer, mode="CoT", extracted=extracted)

    user_text = prompts.render("generate_pot_user", question=req.question, contexts=contexts)
    system_text = prompts.get("generate_pot_system")
    try:
        exchange = chat.chat(
            user_text, stage_label="generate", system_text=system_text,
            temperature=temperature,
        )
    except HirecError as exc:
        raise GenerationFailed(str(exc))
    if trace is not None:
        trace.record(exchange)
    program = extract_code_block(exchange.response_text)
    execution = execute_program(program, executor_cfg)
    if execution.returned_value is None:
        # One repair retry: feed the failure back and ask for a fix.
        repair_text = (
            user_text
            + "\n\nThe previous program failed with the following error. "
            "Fix the program and output it again:\n"
            + (execution.stdout or execution.error_kind or "unknown error")
        )
        try:
            exchange = chat.chat(
                repair_text, stage_label="generate", system_text=system_text,
                temperature=temperature,
            )
        except HirecError as exc:
            raise GenerationFailed(str(exc))
        if trace is not None:
            trace.record(exchange)
        program = extract_code_block(exchange.response_text)
        execution = execute_program(program, executor_cfg)
        if execution.returned_value is None:
            raise ExecutionFailed(
                f"program failed after repair retry ({execution.error_kind})",
                execution=execution,
            )
    return GenerationResult(
        answer_text=format_numeric(execution.returned_value),
        mode="PoT",
        numeric_value=execution.returned_value,
        execution=execution,
    )
