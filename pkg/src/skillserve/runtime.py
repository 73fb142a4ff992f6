"""Handler execution: timeouts, output checks, hot-swap overrides, example self-tests."""

from __future__ import annotations

import asyncio
import contextlib
import difflib
import json
import time
from collections.abc import AsyncIterator
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from loguru import logger

from skillserve.errors import (
    ContractViolation,
    EditOverrideError,
    EditOverrideKind,
    HandlerError,
    HandlerErrorKind,
)
from skillserve.registry import HandlerEntry, HandlerRegistry
from skillserve.schemas import ValidationErrors, canonicalize, validate_input, validate_output
from skillserve.skill import BindingKind, HandlerBinding, Skill, effective_binding
from skillserve.subprocess_runner import run_subprocess_unary, stream_subprocess


def _lookup(binding: HandlerBinding, registry: HandlerRegistry, streaming: bool) -> HandlerEntry:
    entry = registry.get(binding.registry_key or "")
    if entry is None:
        raise HandlerError(HandlerErrorKind.FAILED, f"no handler registered under {binding.registry_key!r}")
    if entry.is_streaming != streaming:
        raise ContractViolation(
            f"handler {binding.registry_key!r} is {entry.kind}, binding expects "
            f"{'streaming' if streaming else 'unary'}"
        )
    return entry


def _failed(exc: BaseException) -> HandlerError:
    text = str(exc)
    return HandlerError(HandlerErrorKind.FAILED, f"{type(exc).__name__}: {text}" if text else type(exc).__name__)


def _ensure_json(value: Any, what: str) -> None:
    try:
        canonicalize(value)
    except (TypeError, ValueError) as e:
        raise HandlerError(HandlerErrorKind.BAD_OUTPUT, f"{what} is not JSON-serializable: {e}") from e


# =============================================================================
# Invocation
# =============================================================================


async def invoke_unary(
    binding: HandlerBinding,
    payload: dict,
    timeout_secs: float,
    *,
    registry: HandlerRegistry,
    skill: Skill | None = None,
) -> dict:
    """
    Run a unary binding under a deadline.

    Args:
        binding: Unary in-process or non-streaming subprocess binding
        payload: Validated input
        timeout_secs: Deadline for the call
        registry: Handler registry for in-process bindings
        skill: When given, the output is checked against its output schema and
            subprocesses run inside its folder

    Returns:
        The handler's output object

    Raises:
        HandlerError: timeout, failed or bad_output
    """
    if binding.is_streaming:
        raise ContractViolation(f"invoke_unary called with a streaming binding ({binding.describe()})")

    start_time = time.perf_counter()
    if binding.kind is BindingKind.SUBPROCESS:
        output = await run_subprocess_unary(
            binding.command or (), payload, timeout_secs, cwd=skill.path if skill else None
        )
    else:
        entry = _lookup(binding, registry, streaming=False)
        cm = asyncio.timeout(timeout_secs)
        try:
            async with cm:
                output = await entry.call(payload)
        except TimeoutError as e:
            if cm.expired():
                raise HandlerError.timeout(timeout_secs) from None
            raise _failed(e) from e
        except HandlerError:
            raise
        except Exception as e:
            logger.opt(exception=e).debug(
                "Handler raised", operation="invoke_unary", status="failed", key=binding.registry_key
            )
            raise _failed(e) from e

    if not isinstance(output, dict):
        raise HandlerError(
            HandlerErrorKind.BAD_OUTPUT,
            f"handler returned {type(output).__name__}, expected a JSON object",
        )
    _ensure_json(output, "handler output")
    if skill is not None:
        errors = validate_output(skill, output)
        if errors is not None:
            raise HandlerError(HandlerErrorKind.BAD_OUTPUT, f"output does not match schema: {errors.as_text()}")

    logger.debug(
        "Unary handler finished",
        operation="invoke_unary",
        status="success",
        binding=binding.describe(),
        metrics={"duration_ms": int((time.perf_counter() - start_time) * 1000)},
    )
    return output


async def invoke_streaming(
    binding: HandlerBinding,
    payload: dict,
    timeout_secs: float,
    *,
    registry: HandlerRegistry,
    skill: Skill | None = None,
) -> AsyncIterator[Any]:
    """
    Yield a streaming binding's chunks as they are produced.

    The deadline covers the whole stream. Chunks already yielded stay delivered
    when the stream later ends in a HandlerError.
    """
    if not binding.is_streaming:
        raise ContractViolation(f"invoke_streaming called with a unary binding ({binding.describe()})")

    if binding.kind is BindingKind.SUBPROCESS:
        source = stream_subprocess(binding.command or (), payload, timeout_secs, cwd=skill.path if skill else None)
        async with contextlib.aclosing(source):
            async for chunk in source:
                _ensure_json(chunk, "chunk")
                yield chunk
        return

    entry = _lookup(binding, registry, streaming=True)
    deadline = asyncio.get_running_loop().time() + timeout_secs
    gen = entry.stream(payload)
    count = 0
    try:
        while True:
            cm = asyncio.timeout_at(deadline)
            try:
                async with cm:
                    chunk = await anext(gen)
            except StopAsyncIteration:
                break
            except TimeoutError as e:
                if cm.expired():
                    raise HandlerError.timeout(timeout_secs) from None
                raise _failed(e) from e
            except HandlerError:
                raise
            except Exception as e:
                raise _failed(e) from e
            _ensure_json(chunk, "chunk")
            count += 1
            yield chunk
    finally:
        with contextlib.suppress(Exception):
            await gen.aclose()
        logger.debug(
            "Streaming handler closed",
            operation="invoke_streaming",
            binding=binding.describe(),
            metrics={"chunks": count},
        )


async def collect_chunks(
    skill: Skill,
    binding: HandlerBinding,
    payload: dict,
    registry: HandlerRegistry,
    partial: list[Any] | None = None,
) -> list[Any]:
    """Materialize a stream; ``partial`` receives chunks as they arrive."""
    chunks = partial if partial is not None else []
    async for chunk in invoke_streaming(
        binding, payload, skill.meta.timeout_secs, registry=registry, skill=skill
    ):
        chunks.append(chunk)
    return chunks


def chunk_text(chunk: Any) -> str:
    """String chunks as-is; everything else as canonical JSON text."""
    if isinstance(chunk, str):
        return chunk
    return canonicalize(chunk).decode("utf-8")


# =============================================================================
# Hot-swap overrides
# =============================================================================


def _malformed(message: str) -> EditOverrideError:
    return EditOverrideError(EditOverrideKind.MALFORMED, message)


def build_override_binding(override: Any, registry: HandlerRegistry) -> HandlerBinding:
    """Turn ``{registry_key}`` or ``{command, streaming?}`` into a binding."""
    if not isinstance(override, dict):
        raise _malformed("override must be a JSON object")
    has_key = "registry_key" in override
    has_command = "command" in override
    if has_key == has_command:
        raise _malformed("override needs exactly one of 'registry_key' or 'command'")

    if has_key:
        extra = set(override) - {"registry_key"}
        if extra:
            raise _malformed(f"unexpected fields: {sorted(extra)}")
        key = override["registry_key"]
        if not isinstance(key, str) or not key:
            raise _malformed("'registry_key' must be a non-empty string")
        entry = registry.get(key)
        if entry is None:
            raise EditOverrideError(EditOverrideKind.NOT_FOUND, f"no handler registered under {key!r}")
        return HandlerBinding.in_process(key, entry.is_streaming)

    extra = set(override) - {"command", "streaming"}
    if extra:
        raise _malformed(f"unexpected fields: {sorted(extra)}")
    command = override["command"]
    if (
        not isinstance(command, list)
        or not command
        or not all(isinstance(part, str) and part for part in command)
    ):
        raise _malformed("'command' must be a non-empty list of non-empty strings")
    streaming = override.get("streaming", False)
    if not isinstance(streaming, bool):
        raise _malformed("'streaming' must be a boolean")
    return HandlerBinding.subprocess(command, streaming=streaming)


def apply_edit_override(skill: Skill, override: Any, registry: HandlerRegistry) -> HandlerBinding:
    """
    Install an override as the skill's edit binding.

    Raises:
        EditOverrideError: malformed override, unknown registry key, or a
            streaming kind that differs from the skill's
    """
    binding = build_override_binding(override, registry)
    if binding.is_streaming != skill.streaming:
        raise EditOverrideError(
            EditOverrideKind.TYPE_CHECK,
            f"skill {skill.name!r} is {'streaming' if skill.streaming else 'unary'}, "
            f"override is {'streaming' if binding.is_streaming else 'unary'}",
        )
    skill.edit_binding = binding
    logger.info(
        "Edit override installed",
        operation="apply_edit_override",
        status="success",
        skill=skill.name,
        binding=binding.describe(),
    )
    return binding


def clear_edit_override(skill: Skill) -> None:
    if skill.edit_binding is None:
        return
    skill.edit_binding = None
    logger.info("Edit override cleared", operation="clear_edit_override", status="success", skill=skill.name)


# =============================================================================
# Examples
# =============================================================================


@dataclass(frozen=True)
class ExampleResult:
    source_file: Path
    passed: bool
    diff: str = ""


def _json_diff(expected: Any, actual: Any) -> str:
    want = json.dumps(expected, indent=2, sort_keys=True, ensure_ascii=False).splitlines()
    got = json.dumps(actual, indent=2, sort_keys=True, ensure_ascii=False, default=str).splitlines()
    return "\n".join(difflib.unified_diff(want, got, "expected", "actual", lineterm=""))


async def run_examples(skill: Skill, registry: HandlerRegistry) -> list[ExampleResult]:
    """Run each example through the effective binding and compare with its output."""
    results: list[ExampleResult] = []
    for example in skill.examples:
        validated = validate_input(skill, example.input)
        if isinstance(validated, ValidationErrors):
            results.append(ExampleResult(example.source_file, False, f"invalid input: {validated.as_text()}"))
            continue

        binding = effective_binding(skill)
        try:
            if skill.streaming:
                expected = example.output
                if not (isinstance(expected, dict) and isinstance(expected.get("chunks"), list)):
                    results.append(ExampleResult(
                        example.source_file, False, 'streaming example output must be {"chunks": [...]}'
                    ))
                    continue
                actual: Any = {"chunks": await collect_chunks(skill, binding, validated, registry)}
            else:
                expected = example.output
                actual = await invoke_unary(
                    binding, validated, skill.meta.timeout_secs, registry=registry, skill=skill
                )
        except HandlerError as e:
            results.append(ExampleResult(example.source_file, False, f"handler {e.kind.value}: {e.message}"))
            continue

        if actual == expected:
            results.append(ExampleResult(example.source_file, True))
        else:
            results.append(ExampleResult(example.source_file, False, _json_diff(expected, actual)))

    logger.debug(
        "Examples run",
        operation="run_examples",
        skill=skill.name,
        metrics={"total": len(results), "passed": sum(r.passed for r in results)},
    )
    return results
