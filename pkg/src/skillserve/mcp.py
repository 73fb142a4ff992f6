"""MCP over JSON-RPC 2.0: initialize, ping, tools/list, tools/call.

Tools come from the same Skill records as the HTTP routes. A tool call that
reaches a skill never turns into a JSON-RPC error: validation and handler
problems come back as ``isError`` results.
"""

from __future__ import annotations

import json
import time
from collections.abc import AsyncIterator
from contextlib import asynccontextmanager
from typing import Any

from loguru import logger

from skillserve.errors import HandlerError
from skillserve.registry import HandlerRegistry
from skillserve.runtime import chunk_text, collect_chunks, invoke_unary
from skillserve.schemas import (
    ValidationErrors,
    canonical_text,
    loads_strict,
    tool_descriptor,
    validate_input,
)
from skillserve.skill import Skill, effective_binding

JSONRPC_VERSION = "2.0"
DEFAULT_PROTOCOL_VERSION = "2025-03-26"

# =============================================================================
# JSON-RPC errors
# =============================================================================

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603


class JsonRpcError(Exception):
    """Base class for errors returned in a JSON-RPC error object."""

    code = INTERNAL_ERROR
    message = "Internal error"

    def __init__(self, data: Any = None, message: str | None = None):
        if message is not None:
            self.message = message
        super().__init__(self.code, self.message, data)
        self.data = data

    def as_error_object(self) -> dict:
        error: dict[str, Any] = {"code": self.code, "message": self.message}
        if self.data is not None:
            error["data"] = self.data
        return error


class ParseError(JsonRpcError):
    code = PARSE_ERROR
    message = "Parse error"


class InvalidRequestError(JsonRpcError):
    code = INVALID_REQUEST
    message = "Invalid request"


class MethodNotFoundError(JsonRpcError):
    code = METHOD_NOT_FOUND
    message = "Method not found"


class InvalidParamsError(JsonRpcError):
    code = INVALID_PARAMS
    message = "Invalid params"


class InternalError(JsonRpcError):
    code = INTERNAL_ERROR
    message = "Internal error"


def _error_response(request_id: Any, error: JsonRpcError) -> dict:
    return {"jsonrpc": JSONRPC_VERSION, "id": request_id, "error": error.as_error_object()}


def _result_response(request_id: Any, result: Any) -> dict:
    return {"jsonrpc": JSONRPC_VERSION, "id": request_id, "result": result}


def _encode(payload: Any) -> bytes:
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def _valid_id(value: Any) -> bool:
    return value is None or (isinstance(value, (str, int, float)) and not isinstance(value, bool))


def _text_result(text: str, is_error: bool, structured: dict | None = None) -> dict:
    result: dict[str, Any] = {"content": [{"type": "text", "text": text}], "isError": is_error}
    if structured is not None:
        result["structuredContent"] = structured
    return result


# =============================================================================
# Server
# =============================================================================


class McpServer:
    """Holds the tool table and answers JSON-RPC request bodies."""

    def __init__(self, registry: HandlerRegistry, name: str = "skillserve", version: str = "0.0.0"):
        self.registry = registry
        self.name = name
        self.version = version
        self.running = False
        self._skills: dict[str, Skill] = {}

    def register(self, skill: Skill) -> None:
        """Add a skill; hidden skills (is_mcp = false) are kept out of tools/list and tools/call."""
        self._skills[skill.name] = skill

    @asynccontextmanager
    async def lifespan(self, app: Any) -> AsyncIterator[None]:
        self.running = True
        logger.info(
            "MCP subsystem started",
            operation="mcp_lifespan",
            status="started",
            metrics={"tools": len(self.visible_skills())},
        )
        try:
            yield None
        finally:
            self.running = False
            logger.info("MCP subsystem stopped", operation="mcp_lifespan", status="stopped")

    def visible_skills(self) -> list[Skill]:
        return sorted((s for s in self._skills.values() if s.meta.is_mcp), key=lambda s: s.name)

    # -------------------------------------------------------------------------
    # Methods
    # -------------------------------------------------------------------------

    def initialize(self, params: dict) -> dict:
        requested = params.get("protocolVersion")
        return {
            "protocolVersion": requested if isinstance(requested, str) and requested else DEFAULT_PROTOCOL_VERSION,
            "capabilities": {"tools": {}},
            "serverInfo": {"name": self.name, "version": self.version},
        }

    def tools_list(self, params: dict | None = None) -> dict:
        return {"tools": [tool_descriptor(skill).to_dict() for skill in self.visible_skills()]}

    async def tools_call(self, params: dict) -> dict:
        name = params.get("name")
        if not isinstance(name, str):
            raise InvalidParamsError(message="Invalid params: 'name' must be a string")
        skill = self._skills.get(name)
        if skill is None or not skill.meta.is_mcp:
            raise InvalidParamsError(message=f"Unknown tool: {name}")
        arguments = params.get("arguments")
        if arguments is None:
            arguments = {}
        if not isinstance(arguments, dict):
            raise InvalidParamsError(message="Invalid params: 'arguments' must be an object")

        validated = validate_input(skill, arguments)
        if isinstance(validated, ValidationErrors):
            return _text_result(f"Validation error: {validated.as_text()}", is_error=True)

        binding = effective_binding(skill)
        try:
            if skill.streaming:
                chunks = await collect_chunks(skill, binding, validated, self.registry)
                return _text_result("\n".join(chunk_text(c) for c in chunks), is_error=False)
            output = await invoke_unary(
                binding, validated, skill.meta.timeout_secs, registry=self.registry, skill=skill
            )
        except HandlerError as e:
            return _text_result(e.message, is_error=True)
        return _text_result(canonical_text(output), is_error=False, structured=output)

    async def _dispatch(self, method: str, params: dict) -> Any:
        if method == "initialize":
            return self.initialize(params)
        if method == "ping":
            return {}
        if method == "tools/list":
            return self.tools_list(params)
        if method == "tools/call":
            return await self.tools_call(params)
        raise MethodNotFoundError(data={"method": method})

    # -------------------------------------------------------------------------
    # Envelope handling
    # -------------------------------------------------------------------------

    async def _handle_message(self, message: Any) -> dict | None:
        if not isinstance(message, dict):
            return _error_response(None, InvalidRequestError())

        is_notification = "id" not in message
        request_id = message.get("id")
        if not _valid_id(request_id):
            return _error_response(None, InvalidRequestError(message="Invalid request: bad id"))

        method = message.get("method")
        if message.get("jsonrpc") != JSONRPC_VERSION or not isinstance(method, str):
            return _error_response(request_id, InvalidRequestError())

        params = message.get("params", {})
        if params is None:
            params = {}

        if is_notification:
            # notifications/initialized and friends: accepted, never answered
            logger.debug("Notification received", operation="handle_jsonrpc", method=method)
            return None

        start_time = time.perf_counter()
        try:
            if not isinstance(params, dict):
                raise InvalidParamsError(message="Invalid params: expected an object")
            result = await self._dispatch(method, params)
            response = _result_response(request_id, result)
        except JsonRpcError as e:
            response = _error_response(request_id, e)
        except Exception as e:
            logger.opt(exception=e).error(
                "JSON-RPC method failed", operation="handle_jsonrpc", status="failed", method=method
            )
            response = _error_response(request_id, InternalError(data={"error": str(e)}))

        logger.debug(
            "JSON-RPC request handled",
            operation="handle_jsonrpc",
            status="error" if "error" in response else "success",
            method=method,
            metrics={"duration_ms": int((time.perf_counter() - start_time) * 1000)},
        )
        return response

    async def handle_jsonrpc(self, body: bytes) -> bytes | None:
        """
        Answer one JSON-RPC body (single message or batch).

        Returns:
            Encoded response, or None when every message was a notification
        """
        try:
            message = loads_strict(body)
        except (ValueError, UnicodeDecodeError):
            return _encode(_error_response(None, ParseError()))

        if isinstance(message, list):
            if not message:
                return _encode(_error_response(None, InvalidRequestError()))
            responses = [r for r in [await self._handle_message(m) for m in message] if r is not None]
            return _encode(responses) if responses else None

        response = await self._handle_message(message)
        return _encode(response) if response is not None else None
