"""SSE framing and the per-response event grammar."""

from __future__ import annotations

import random
import re

import pytest

from skillserve.errors import HandlerError, HandlerErrorKind
from skillserve.skill import HandlerBinding
from skillserve.sse import SseEvent, encode_sse_event, error_event, iter_events, stream_sse

pytestmark = pytest.mark.anyio

STREAMING_GRAMMAR = re.compile(r"^(chunk )*(done|error) $")
UNARY_GRAMMAR = re.compile(r"^(result done|error) $")


def test_encode_chunk():
    assert encode_sse_event(SseEvent("chunk", "hi")) == b'event: chunk\ndata: "hi"\n\n'


def test_encode_done():
    assert encode_sse_event(SseEvent("done", None)) == b"event: done\ndata: null\n\n"


def test_encode_error():
    event = error_event(HandlerError.timeout(1))
    assert encode_sse_event(event) == b'event: error\ndata: {"detail":"handler timeout after 1s"}\n\n'


def test_data_is_single_line():
    encoded = encode_sse_event(SseEvent("chunk", {"text": "line one\nline two", "b": [1, 2]}))
    assert encoded == b'event: chunk\ndata: {"b":[1,2],"text":"line one\\nline two"}\n\n'


async def _names(skill, payload, registry) -> list[str]:
    return [e.event async for e in iter_events(skill, skill.binding, payload, registry)]


async def test_unary_result_then_done(skills, registry):
    events = [e async for e in iter_events(skills["echo"], skills["echo"].binding, {"text": "x"}, registry)]
    assert events == [SseEvent("result", {"text": "x"}), SseEvent("done", None)]


async def test_streaming_chunks_then_done(skills, registry):
    assert await _names(skills["vectornorm"], {"values": [1, 2]}, registry) == ["chunk", "chunk", "chunk", "done"]


async def test_timeout_is_single_error(skills, registry):
    events = [e async for e in iter_events(skills["sleepy"], skills["sleepy"].binding, {"seconds": 2}, registry)]
    assert events == [SseEvent("error", {"detail": "handler timeout after 1s"})]


async def test_error_after_chunks(skills, registry):
    assert await _names(skills["flaky"], {}, registry) == ["chunk", "chunk", "error"]


async def test_failed_unary_is_single_error(skills, registry):
    assert await _names(skills["boom"], {"text": "x"}, registry) == ["error"]


async def test_stream_sse_bytes(skills, registry):
    skill = skills["echo"]
    body = b"".join([part async for part in stream_sse(skill, skill.binding, {"text": "x"}, registry)])
    assert body == b'event: result\ndata: {"text":"x"}\n\nevent: done\ndata: null\n\n'


async def test_grammar_over_randomized_streams(skills, registry):
    rng = random.Random(3)

    async def erratic(payload):
        for i in range(payload["n"]):
            yield i
        if payload["fail"]:
            raise HandlerError(HandlerErrorKind.FAILED, "erratic")

    def maybe_unary(payload):
        if payload["fail"]:
            raise ValueError("nope")
        return {"text": "ok"}

    registry.register("erratic", erratic)
    registry.register("maybe_unary", maybe_unary)
    streaming = skills["flaky"]
    unary = skills["boom"]

    for _ in range(200):
        payload = {"n": rng.randint(0, 5), "fail": rng.random() < 0.3}
        if rng.random() < 0.5:
            names = [e.event async for e in iter_events(
                streaming, HandlerBinding.in_process("erratic", True), payload, registry
            )]
            assert STREAMING_GRAMMAR.match("".join(f"{n} " for n in names)), names
        else:
            names = [e.event async for e in iter_events(
                unary, HandlerBinding.in_process("maybe_unary", False), payload, registry
            )]
            assert UNARY_GRAMMAR.match("".join(f"{n} " for n in names)), names
