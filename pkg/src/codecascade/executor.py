"""Sandboxed execution of assistant code with key substitution.

The fake key in generated code is swapped for the real key immediately
before execution; the substituted text exists only in the sandbox's code
buffer. Captured output is re-masked so the real key can never leak back
into a transcript, even if the executed code prints it.
"""

from __future__ import annotations

import logging
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .core import ApiSpec

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 60.0
DEFAULT_STREAM_CAP = 16 * 1024
TRUNCATION_MARKER = "[output truncated]"
DEFAULT_EXECUTOR_REPLY = "Reply TERMINATE if everything is done."
KILLED_EXIT_STATUS = -9


class MissingCredentialError(Exception):
    """The env var named by the ApiSpec is unset."""


@dataclass(frozen=True)
class ExecutionResult:
    stdout: str
    stderr: str
    exit_status: int
    timed_out: bool
    duration: float


def substitute_keys(code: str, api: ApiSpec, real_key: str | None = None) -> str:
    """Replace every occurrence of the fake key with the real key.

    The returned text must only ever reach the sandbox; never log or
    persist it. Raises MissingCredentialError when the real key env var
    is unset and no explicit value is given.
    """
    if real_key is None:
        real_key = os.environ.get(api.real_key_ref)
    if real_key is None:
        raise MissingCredentialError(
            f"missing credential: environment variable {api.real_key_ref} is not set"
        )
    return code.replace(api.fake_key, real_key)


def truncate_stream(text: str, cap: int) -> str:
    """Cap a captured stream at `cap` bytes, marking the cut."""
    raw = text.encode("utf-8", errors="replace")
    if len(raw) <= cap:
        return text
    head = raw[:cap].decode("utf-8", errors="replace")
    return head + "\n" + TRUNCATION_MARKER


def execute(
    code: str,
    workdir: str | Path,
    timeout: float = DEFAULT_TIMEOUT_S,
    interpreter: str | None = None,
    env_allowlist: dict[str, str] | None = None,
    stream_cap: int = DEFAULT_STREAM_CAP,
) -> ExecutionResult:
    """Run code in a fresh subprocess under the configured interpreter.

    Nonzero exit is data, not an exception: the trace is fed back to the
    assistant. Only a timeout or a missing interpreter is special-cased.
    """
    interpreter = interpreter or sys.executable
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    script = workdir / "snippet.py"
    script.write_text(code, encoding="utf-8")

    env = {"PATH": os.environ.get("PATH", "/usr/bin:/bin")}
    if env_allowlist:
        env.update(env_allowlist)

    start = time.monotonic()
    try:
        proc = subprocess.run(
            [interpreter, str(script)],
            cwd=str(workdir),
            env=env,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
        duration = time.monotonic() - start
        return ExecutionResult(
            stdout=truncate_stream(proc.stdout, stream_cap),
            stderr=truncate_stream(proc.stderr, stream_cap),
            exit_status=proc.returncode,
            timed_out=False,
            duration=duration,
        )
    except subprocess.TimeoutExpired as exc:
        duration = time.monotonic() - start
        out = exc.stdout.decode("utf-8", errors="replace") if isinstance(exc.stdout, bytes) else (exc.stdout or "")
        err = exc.stderr.decode("utf-8", errors="replace") if isinstance(exc.stderr, bytes) else (exc.stderr or "")
        return ExecutionResult(
            stdout=truncate_stream(out, stream_cap),
            stderr=truncate_stream(err, stream_cap),
            exit_status=KILLED_EXIT_STATUS,
            timed_out=True,
            duration=duration,
        )
    except FileNotFoundError as exc:
        raise RuntimeError(f"configured interpreter not available: {interpreter}") from exc


def format_executor_reply(
    result: ExecutionResult | None, stream_cap: int = DEFAULT_STREAM_CAP
) -> str:
    """Build the executor's reply to the assistant.

    With no code block there is nothing to run and the exact default
    message is returned; otherwise the reply carries the exit status and
    the (capped) captured streams.
    """
    if result is None:
        return DEFAULT_EXECUTOR_REPLY
    parts = [f"exit status: {result.exit_status}"]
    if result.timed_out:
        parts.append("execution timed out and was killed")
    stdout = truncate_stream(result.stdout, stream_cap)
    stderr = truncate_stream(result.stderr, stream_cap)
    parts.append("stdout:\n" + (stdout if stdout else "(empty)"))
    parts.append("stderr:\n" + (stderr if stderr else "(empty)"))
    return "\n".join(parts)


class Executor(Protocol):
    """What the conversation engine needs: run one program for one API."""

    def run(self, code: str, api: ApiSpec) -> ExecutionResult: ...


class SandboxExecutor:
    """Subprocess sandbox bound to one conversation's private workdir.

    The environment passed to the child is an allow-list: a minimal PATH
    plus the API's real-key variable. Real-key bytes found in captured
    output are masked back to the fake key before anything leaves here.
    """

    def __init__(
        self,
        interpreter: str | None = None,
        timeout: float = DEFAULT_TIMEOUT_S,
        stream_cap: int = DEFAULT_STREAM_CAP,
        workdir: str | Path | None = None,
    ):
        self.interpreter = interpreter or sys.executable
        self.timeout = timeout
        self.stream_cap = stream_cap
        self.workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="codecascade-"))

    def run(self, code: str, api: ApiSpec) -> ExecutionResult:
        try:
            real_key = os.environ.get(api.real_key_ref)
            substituted = substitute_keys(code, api, real_key)
        except MissingCredentialError as exc:
            return ExecutionResult(
                stdout="",
                stderr=str(exc),
                exit_status=1,
                timed_out=False,
                duration=0.0,
            )
        allow = {api.real_key_ref: real_key} if real_key else {}
        result = execute(
            substituted,
            self.workdir,
            timeout=self.timeout,
            interpreter=self.interpreter,
            env_allowlist=allow,
            stream_cap=self.stream_cap,
        )
        if real_key:
            result = ExecutionResult(
                stdout=result.stdout.replace(real_key, api.fake_key),
                stderr=result.stderr.replace(real_key, api.fake_key),
                exit_status=result.exit_status,
                timed_out=result.timed_out,
                duration=result.duration,
            )
        return result


class StubExecutor:
    """In-process executor for simulation: no subprocess, no substitution."""

    def __init__(self, stdout: str = "ok\n", exit_status: int = 0):
        self._result = ExecutionResult(
            stdout=stdout, stderr="", exit_status=exit_status, timed_out=False, duration=0.0
        )

    def run(self, code: str, api: ApiSpec) -> ExecutionResult:
        return self._result
