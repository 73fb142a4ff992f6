"""Lifespan composition: the MCP subsystem wraps the user's lifespan."""

from __future__ import annotations

import inspect
from collections.abc import AsyncIterator, Awaitable, Callable, Mapping, Sequence
from contextlib import AbstractAsyncContextManager, AsyncExitStack, asynccontextmanager
from typing import Any

from loguru import logger

Lifespan = Callable[[Any], AbstractAsyncContextManager[Mapping[str, Any] | None]]
Hook = Callable[[], Awaitable[None] | None]


def compose_lifecycle(mcp_lifespan: Lifespan, user_lifespan: Lifespan | None = None) -> Lifespan:
    """
    Nest ``user_lifespan`` inside ``mcp_lifespan``.

    Startup runs MCP then user; shutdown runs user then MCP. If the user's
    startup raises, MCP is still shut down before the error propagates.

    Args:
        mcp_lifespan: Outer lifespan (the MCP subsystem)
        user_lifespan: Optional inner lifespan; its yielded state becomes the app state

    Returns:
        A Starlette-compatible lifespan callable
    """

    @asynccontextmanager
    async def merged_lifespan(app: Any) -> AsyncIterator[Mapping[str, Any] | None]:
        state: Mapping[str, Any] | None = None
        async with AsyncExitStack() as stack:
            await stack.enter_async_context(mcp_lifespan(app))
            if user_lifespan is not None:
                state = await stack.enter_async_context(user_lifespan(app))
            logger.info("Lifespan started", operation="lifespan", status="started")
            yield state
        logger.info("Lifespan stopped", operation="lifespan", status="stopped")

    return merged_lifespan


async def _run_hook(hook: Hook) -> None:
    result = hook()
    if inspect.isawaitable(result):
        await result


def hooks_lifespan(
    on_startup: Sequence[Hook] = (),
    on_shutdown: Sequence[Hook] = (),
) -> Lifespan:
    """Build a lifespan from plain hook lists; shutdown hooks run in reverse order."""

    @asynccontextmanager
    async def lifespan(app: Any) -> AsyncIterator[None]:
        for hook in on_startup:
            await _run_hook(hook)
        try:
            yield None
        finally:
            for hook in reversed(on_shutdown):
                try:
                    await _run_hook(hook)
                except Exception:
                    logger.exception("Shutdown hook failed", operation="lifespan", status="failed")

    return lifespan
