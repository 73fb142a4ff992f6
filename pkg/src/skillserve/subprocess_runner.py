"""Subprocess handler protocol.

stdin  : one UTF-8 JSON document, then EOF
stdout : one JSON document (unary) or one JSON value per line (streaming)
exit 0 : success; anything else fails with the stderr tail

Children run in their own session so a timeout can kill the whole process
group, and every exit path reaps the child.
"""

from __future__ import annotations

import asyncio
import json
import os
import signal
import time
from collections.abc import AsyncIterator, Sequence
from pathlib import Path
from typing import Any

from loguru import logger

from skillserve.errors import HandlerError, HandlerErrorKind

STDERR_TAIL_BYTES = 4096
STDOUT_LINE_LIMIT = 1 << 20  # 1 MiB per NDJSON line


# =============================================================================
# Process plumbing
# =============================================================================


async def _spawn(command: Sequence[str], cwd: Path | None) -> asyncio.subprocess.Process:
    if not command:
        raise HandlerError(HandlerErrorKind.FAILED, "subprocess command is empty")
    try:
        proc = await asyncio.create_subprocess_exec(
            *command,
            stdin=asyncio.subprocess.PIPE,
            stdout=asyncio.subprocess.PIPE,
            stderr=asyncio.subprocess.PIPE,
            cwd=str(cwd) if cwd else None,
            start_new_session=True,
            limit=STDOUT_LINE_LIMIT,
        )
    except OSError as e:
        raise HandlerError(HandlerErrorKind.FAILED, f"cannot start {command[0]!r}: {e}") from e
    logger.debug(
        "Subprocess handler started",
        operation="run_subprocess_handler",
        status="started",
        command=list(command),
        pid=proc.pid,
    )
    return proc


async def _feed_stdin(proc: asyncio.subprocess.Process, payload: Any) -> None:
    assert proc.stdin is not None
    data = json.dumps(payload, ensure_ascii=False).encode("utf-8")
    try:
        proc.stdin.write(data)
        await proc.stdin.drain()
    except (BrokenPipeError, ConnectionResetError):
        # Child exited without reading its input; exit status decides the outcome
        pass
    finally:
        proc.stdin.close()


async def _read_tail(stream: asyncio.StreamReader | None) -> tuple[bytes, bool]:
    tail = bytearray()
    truncated = False
    if stream is None:
        return b"", False
    while chunk := await stream.read(4096):
        tail += chunk
        if len(tail) > STDERR_TAIL_BYTES:
            del tail[:-STDERR_TAIL_BYTES]
            truncated = True
    return bytes(tail), truncated


async def _kill_group(proc: asyncio.subprocess.Process) -> None:
    """SIGKILL the child's process group, then reap the child."""
    if proc.returncode is None:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            try:
                proc.kill()
            except ProcessLookupError:
                pass
    await proc.wait()


async def _finish_stderr(task: asyncio.Task) -> tuple[bytes, bool]:
    if not task.done():
        task.cancel()
    try:
        return await task
    except asyncio.CancelledError:
        return b"", False


def _exit_error(returncode: int, tail: bytes, truncated: bool) -> HandlerError:
    text = tail.decode("utf-8", errors="replace").strip()
    message = f"handler exited with code {returncode}"
    if text:
        message += f": {text}"
    if truncated:
        message += f" (stderr truncated to last {STDERR_TAIL_BYTES} bytes)"
    return HandlerError(HandlerErrorKind.FAILED, message)


def _parse_single_document(stdout: bytes) -> Any:
    try:
        text = stdout.decode("utf-8").strip()
    except UnicodeDecodeError as e:
        raise HandlerError(HandlerErrorKind.BAD_OUTPUT, f"stdout is not UTF-8: {e}") from e
    if not text:
        raise HandlerError(HandlerErrorKind.BAD_OUTPUT, "handler wrote nothing to stdout")
    decoder = json.JSONDecoder()
    try:
        value, end = decoder.raw_decode(text)
    except json.JSONDecodeError as e:
        raise HandlerError(HandlerErrorKind.BAD_OUTPUT, f"stdout is not JSON: {e}") from e
    if text[end:].strip():
        raise HandlerError(HandlerErrorKind.BAD_OUTPUT, "stdout holds more than one JSON document")
    return value


# =============================================================================
# Public API
# =============================================================================


async def run_subprocess_unary(
    command: Sequence[str],
    payload: Any,
    timeout_secs: float,
    cwd: Path | None = None,
) -> Any:
    """
    Run a unary subprocess handler.

    Args:
        command: argv, non-empty
        payload: validated input, written to stdin as one JSON document
        timeout_secs: deadline for the whole run
        cwd: working directory (the skill folder)

    Returns:
        The single JSON document read from stdout

    Raises:
        HandlerError: timeout, nonzero exit (failed) or unparseable stdout (bad_output)
    """
    start_time = time.perf_counter()
    proc = await _spawn(command, cwd)
    stderr_task = asyncio.create_task(_read_tail(proc.stderr))
    try:
        async with asyncio.timeout(timeout_secs):
            await _feed_stdin(proc, payload)
            assert proc.stdout is not None
            stdout = await proc.stdout.read()
            returncode = await proc.wait()
            tail, truncated = await stderr_task
    except TimeoutError:
        await _kill_group(proc)
        logger.warning(
            "Subprocess handler timed out",
            operation="run_subprocess_handler",
            status="timeout",
            pid=proc.pid,
            metrics={"timeout_secs": timeout_secs},
        )
        raise HandlerError.timeout(timeout_secs) from None
    finally:
        if proc.returncode is None:
            await _kill_group(proc)
        await _finish_stderr(stderr_task)

    logger.debug(
        "Subprocess handler finished",
        operation="run_subprocess_handler",
        status="success" if returncode == 0 else "failed",
        pid=proc.pid,
        metrics={"returncode": returncode, "duration_ms": int((time.perf_counter() - start_time) * 1000)},
    )
    if returncode != 0:
        raise _exit_error(returncode, tail, truncated)
    return _parse_single_document(stdout)


async def stream_subprocess(
    command: Sequence[str],
    payload: Any,
    timeout_secs: float,
    cwd: Path | None = None,
) -> AsyncIterator[Any]:
    """Run a streaming subprocess handler, yielding one chunk per stdout line."""
    loop = asyncio.get_running_loop()
    deadline = loop.time() + timeout_secs
    proc = await _spawn(command, cwd)
    stderr_task = asyncio.create_task(_read_tail(proc.stderr))
    assert proc.stdout is not None
    try:
        try:
            async with asyncio.timeout_at(deadline):
                await _feed_stdin(proc, payload)
        except TimeoutError:
            raise HandlerError.timeout(timeout_secs) from None

        while True:
            try:
                async with asyncio.timeout_at(deadline):
                    line = await proc.stdout.readline()
            except TimeoutError:
                raise HandlerError.timeout(timeout_secs) from None
            except ValueError as e:
                raise HandlerError(HandlerErrorKind.BAD_OUTPUT, f"stdout line too long: {e}") from e
            if not line:
                break
            text = line.decode("utf-8", errors="replace").strip()
            if not text:
                continue
            try:
                chunk = json.loads(text)
            except json.JSONDecodeError as e:
                raise HandlerError(
                    HandlerErrorKind.BAD_OUTPUT, f"stdout line is not JSON: {text[:80]!r}"
                ) from e
            yield chunk

        try:
            async with asyncio.timeout_at(deadline):
                returncode = await proc.wait()
                tail, truncated = await stderr_task
        except TimeoutError:
            raise HandlerError.timeout(timeout_secs) from None
        if returncode != 0:
            raise _exit_error(returncode, tail, truncated)
    finally:
        if proc.returncode is None:
            await _kill_group(proc)
        await _finish_stderr(stderr_task)


async def run_subprocess_handler(
    command: Sequence[str],
    payload: Any,
    *,
    streaming: bool,
    timeout_secs: float,
    cwd: Path | None = None,
) -> Any:
    """Unary: the output document. Streaming: an async iterator of chunks (not yet started)."""
    if streaming:
        return stream_subprocess(command, payload, timeout_secs, cwd)
    return await run_subprocess_unary(command, payload, timeout_secs, cwd)
