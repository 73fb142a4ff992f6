"""Server-Sent Events framing for skill responses.

Grammar of one response body:

    streaming skill : chunk* (done | error)
    unary skill     : (result done) | error

``data`` is always canonical single-line JSON; ``done`` carries null.
"""

from __future__ import annotations

from collections.abc import AsyncIterator
from dataclasses import dataclass
from typing import Any, Literal

from loguru import logger

from skillserve.errors import HandlerError
from skillserve.registry import HandlerRegistry
from skillserve.runtime import invoke_streaming, invoke_unary
from skillserve.schemas import canonical_text
from skillserve.skill import HandlerBinding, Skill

EventName = Literal["chunk", "result", "done", "error"]

SSE_HEADERS = {
    "Cache-Control": "no-cache",
    "Connection": "keep-alive",
    "X-Accel-Buffering": "no",
}


@dataclass(frozen=True)
class SseEvent:
    event: EventName
    data: Any = None


def encode_sse_event(e: SseEvent) -> bytes:
    return f"event: {e.event}\ndata: {canonical_text(e.data)}\n\n".encode("utf-8")


def error_event(exc: HandlerError) -> SseEvent:
    return SseEvent("error", {"detail": exc.message})


async def iter_events(
    skill: Skill,
    binding: HandlerBinding,
    payload: dict,
    registry: HandlerRegistry,
) -> AsyncIterator[SseEvent]:
    """Yield the event sequence for one request, in order, as the handler produces it."""
    timeout_secs = skill.meta.timeout_secs
    if skill.streaming:
        try:
            async for chunk in invoke_streaming(
                binding, payload, timeout_secs, registry=registry, skill=skill
            ):
                yield SseEvent("chunk", chunk)
        except HandlerError as exc:
            yield error_event(exc)
            return
        yield SseEvent("done", None)
        return

    try:
        output = await invoke_unary(binding, payload, timeout_secs, registry=registry, skill=skill)
    except HandlerError as exc:
        yield error_event(exc)
        return
    yield SseEvent("result", output)
    yield SseEvent("done", None)


async def stream_sse(
    skill: Skill,
    binding: HandlerBinding,
    payload: dict,
    registry: HandlerRegistry,
) -> AsyncIterator[bytes]:
    """Encoded SSE body; each event is yielded (and flushed) as soon as it exists."""
    count = 0
    terminal = None
    async for event in iter_events(skill, binding, payload, registry):
        count += 1
        terminal = event.event
        yield encode_sse_event(event)
    logger.debug(
        "SSE stream finished",
        operation="stream_sse",
        status="error" if terminal == "error" else "success",
        skill=skill.name,
        metrics={"events": count},
    )
