"""In-process handler registry.

Handlers are registered under a key (normally the skill's folder name); the
registry entry's description is the "docstring" metadata source.
"""

from __future__ import annotations

import asyncio
import importlib
import inspect
from collections.abc import AsyncIterator, Callable
from dataclasses import dataclass
from typing import Any, Literal

from loguru import logger

from skillserve.errors import ConfigurationError

HandlerKind = Literal["unary", "streaming"]

_EXHAUSTED = object()


@dataclass(frozen=True)
class HandlerEntry:
    key: str
    kind: HandlerKind
    description: str | None
    handler: Callable[..., Any]

    @property
    def is_streaming(self) -> bool:
        return self.kind == "streaming"

    async def call(self, payload: dict) -> Any:
        """Run a unary handler; plain functions run in a worker thread."""
        if inspect.iscoroutinefunction(self.handler):
            return await self.handler(payload)
        return await asyncio.to_thread(self.handler, payload)

    async def stream(self, payload: dict) -> AsyncIterator[Any]:
        """Iterate a streaming handler; sync generators are stepped in a worker thread."""
        if inspect.isasyncgenfunction(self.handler):
            async for chunk in self.handler(payload):
                yield chunk
            return
        gen = self.handler(payload)
        step: asyncio.Future[Any] | None = None
        try:
            while True:
                step = asyncio.ensure_future(asyncio.to_thread(next, gen, _EXHAUSTED))
                # shield: a cancelled caller must not orphan a next() still running in the thread
                chunk = await asyncio.shield(step)
                if chunk is _EXHAUSTED:
                    return
                yield chunk
        finally:
            if step is not None and not step.done():
                step.add_done_callback(lambda f: _close_after_step(f, gen))
            else:
                gen.close()


def _close_after_step(step: asyncio.Future[Any], gen: Any) -> None:
    """Close a sync generator once its in-flight next() has returned."""
    if not step.cancelled():
        step.exception()
    gen.close()


def _docstring_description(fn: Callable[..., Any]) -> str | None:
    doc = inspect.getdoc(fn)
    if not doc:
        return None
    first_paragraph = doc.split("\n\n", 1)[0]
    return " ".join(first_paragraph.split()) or None


def _detect_kind(fn: Callable[..., Any]) -> HandlerKind:
    if inspect.isasyncgenfunction(fn) or inspect.isgeneratorfunction(fn):
        return "streaming"
    return "unary"


class HandlerRegistry:
    """Key -> HandlerEntry. Keys are unique and an entry's kind never changes."""

    def __init__(self) -> None:
        self._entries: dict[str, HandlerEntry] = {}

    def register(
        self,
        key: str,
        fn: Callable[..., Any],
        description: str | None = None,
    ) -> HandlerEntry:
        if key in self._entries:
            raise ConfigurationError(f"handler already registered: {key!r}")
        if not callable(fn):
            raise ConfigurationError(f"handler {key!r} is not callable")
        entry = HandlerEntry(
            key=key,
            kind=_detect_kind(fn),
            description=description if description is not None else _docstring_description(fn),
            handler=fn,
        )
        self._entries[key] = entry
        logger.debug(
            "Handler registered",
            operation="register_handler",
            status="success",
            key=key,
            kind=entry.kind,
        )
        return entry

    def handler(self, key: str, description: str | None = None):
        """Decorator form of :meth:`register`."""

        def decorator(fn: Callable[..., Any]) -> Callable[..., Any]:
            self.register(key, fn, description)
            return fn

        return decorator

    def get(self, key: str) -> HandlerEntry | None:
        return self._entries.get(key)

    def __contains__(self, key: object) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def keys(self) -> list[str]:
        return sorted(self._entries)


def load_registry(spec: str) -> HandlerRegistry:
    """
    Import a registry from a ``module:attribute`` string.

    Raises:
        ConfigurationError: malformed import string, failed import, or the attribute is not a HandlerRegistry
    """
    module_name, sep, attr = spec.partition(":")
    if not sep or not module_name or not attr:
        raise ConfigurationError(f"handlers must look like 'module:attribute', got {spec!r}")
    try:
        module = importlib.import_module(module_name)
    except ImportError as e:
        raise ConfigurationError(f"cannot import handler module {module_name!r}: {e}") from e
    registry = getattr(module, attr, None)
    if not isinstance(registry, HandlerRegistry):
        raise ConfigurationError(f"{spec!r} is not a HandlerRegistry")
    return registry
