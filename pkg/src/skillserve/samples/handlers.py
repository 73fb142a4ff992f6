"""In-process handlers for the bundled sample skills."""

from __future__ import annotations

import asyncio
import math
import re
from collections.abc import AsyncIterator, Iterator

from skillserve.registry import HandlerRegistry

registry = HandlerRegistry()

_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")

_DICTIONARY: dict[str, dict[str, str]] = {
    "es": {
        "hello": "hola",
        "world": "mundo",
        "good": "buenos",
        "morning": "días",
        "thank": "gracias",
        "you": "tú",
        "cat": "gato",
        "dog": "perro",
        "the": "el",
        "and": "y",
    },
    "fr": {
        "hello": "bonjour",
        "world": "monde",
        "good": "bon",
        "morning": "matin",
        "thank": "merci",
        "you": "vous",
        "cat": "chat",
        "dog": "chien",
        "the": "le",
        "and": "et",
    },
}


def _number(value: float) -> str:
    return f"{value:g}"


@registry.handler("echo")
def echo(payload: dict) -> dict:
    """Return the input unchanged."""
    return dict(payload)


@registry.handler("echo_v2")
def echo_v2(payload: dict) -> dict:
    """Echo the text upper-cased."""
    return {"text": str(payload.get("text", "")).upper()}


@registry.handler("greet")
async def greet(payload: dict) -> dict:
    """Greet someone by name."""
    return {"message": f"{payload.get('greeting', 'Hello')}, {payload['name']}!"}


@registry.handler("summarize")
async def summarize(payload: dict) -> AsyncIterator[str]:
    """
    Stream leading sentences while they fit in max_length characters.

    Sentences are joined with one space when measuring; the first sentence
    that would overflow ends the stream.
    """
    max_length = int(payload.get("max_length", 100))
    used = 0
    for sentence in _SENTENCE_END.split(payload["text"].strip()):
        if not sentence:
            continue
        needed = len(sentence) if used == 0 else used + 1 + len(sentence)
        if needed > max_length:
            return
        used = needed
        yield sentence
        await asyncio.sleep(0)


@registry.handler("vectornorm")
def vectornorm(payload: dict) -> Iterator[str]:
    """Stream running sums of squares, then the Euclidean norm."""
    total = 0.0
    for value in payload["values"]:
        total += value * value
        yield f"partial: {_number(total)}"
    yield f"norm: {_number(math.sqrt(total))}"


@registry.handler("classify")
def classify(payload: dict) -> dict:
    """Label text with every matching category."""
    words = set(re.findall(r"[a-z0-9']+", payload["text"].lower()))
    labels = [label for label in payload.get("labels", []) if label.lower() in words]
    return {"labels": labels}


@registry.handler("translate")
async def translate(payload: dict) -> AsyncIterator[str]:
    table = _DICTIONARY[payload.get("target", "es")]
    for word in payload["text"].split():
        yield table.get(word.lower(), word)
        await asyncio.sleep(0)
