"""The single-process HTTP surface.

Routes::

    GET    /skills                 skill summaries
    POST   /skills/{name}          invoke (SSE by default, JSON when Accept asks)
    POST   /skills/{name}/edit     hot-swap the binding    (edit endpoints only)
    DELETE /skills/{name}/edit     drop the hot-swap       (edit endpoints only)
    GET    /openapi.json
    GET    /docs
    POST   <mcp_path>              MCP JSON-RPC
"""

from __future__ import annotations

import time
import uuid
from typing import Any

from loguru import logger
from starlette.applications import Starlette
from starlette.exceptions import HTTPException
from starlette.requests import Request
from starlette.responses import HTMLResponse, JSONResponse, Response, StreamingResponse
from starlette.routing import Route

from skillserve.config_loader import ServerConfig
from skillserve.discovery import discover_many
from skillserve.errors import EditOverrideError, HandlerError, HandlerErrorKind, StartupError
from skillserve.lifecycle import Lifespan, compose_lifecycle
from skillserve.logging_config import trace_id_var
from skillserve.mcp import McpServer
from skillserve.openapi import build_openapi, docs_html
from skillserve.registry import HandlerRegistry, load_registry
from skillserve.runtime import (
    apply_edit_override,
    chunk_text,
    clear_edit_override,
    collect_chunks,
    invoke_unary,
)
from skillserve.schemas import ValidationErrors, loads_strict, validate_input
from skillserve.skill import HandlerBinding, Skill, effective_binding
from skillserve.sse import SSE_HEADERS, stream_sse

SKILL_NOT_FOUND = "skill not found"
INVALID_JSON_BODY = "invalid JSON body"
JSON_MEDIA_TYPE = "application/json"


def enforce_loopback(config: ServerConfig) -> None:
    """
    Refuse to serve edit endpoints on anything but a loopback host.

    Raises:
        StartupError: edit endpoints enabled on a non-loopback host
    """
    if config.enable_edit_endpoints and not config.is_loopback:
        raise StartupError(
            f"edit endpoints are enabled but host {config.host!r} is not a loopback address; "
            "bind to 127.0.0.1, ::1 or localhost, or disable ENABLE_EDIT_ENDPOINTS"
        )


def skill_summary(skill: Skill) -> dict:
    return {
        "name": skill.name,
        "description": skill.meta.description,
        "tags": list(skill.meta.tags),
        "streaming": skill.streaming,
        "is_mcp": skill.meta.is_mcp,
        "timeout_secs": skill.meta.timeout_secs,
    }


async def _http_exception(request: Request, exc: Exception) -> Response:
    assert isinstance(exc, HTTPException)
    return JSONResponse({"detail": exc.detail}, status_code=exc.status_code, headers=exc.headers)


def _detail(message: str, status_code: int, **extra: Any) -> JSONResponse:
    return JSONResponse({"detail": message, **extra}, status_code=status_code)


def _handler_error_response(exc: HandlerError, partial: list[Any] | None = None) -> JSONResponse:
    if exc.kind is HandlerErrorKind.TIMEOUT:
        return _detail(exc.message, 504)
    if partial is not None:
        return _detail(exc.message, 500, partial_chunks=[chunk_text(c) for c in partial])
    return _detail(exc.message, 500)


async def _read_json(request: Request) -> tuple[Any, Response | None]:
    raw = await request.body()
    try:
        return loads_strict(raw), None
    except (ValueError, UnicodeDecodeError):
        return None, _detail(INVALID_JSON_BODY, 400)


class SkillApp(Starlette):
    """Starlette app serving every skill on HTTP and MCP from one registration."""

    def __init__(
        self,
        skills: list[Skill],
        registry: HandlerRegistry,
        config: ServerConfig,
        lifespan: Lifespan | None = None,
        debug: bool = False,
    ):
        self.config = config
        self.registry = registry
        self.skills: dict[str, Skill] = {}
        self.mcp = McpServer(registry, name=config.title, version=config.version)

        routes = [
            Route("/skills", self.list_skills, methods=["GET"]),
            Route("/skills/{name}", self.handle_skill_request, methods=["POST"]),
            Route("/openapi.json", self.openapi_json, methods=["GET"]),
            Route("/docs", self.docs, methods=["GET"]),
            Route(config.mcp_path, self.handle_mcp, methods=["POST"]),
        ]
        if config.enable_edit_endpoints:
            routes.append(Route("/skills/{name}/edit", self.handle_edit_request, methods=["POST"]))
            routes.append(Route("/skills/{name}/edit", self.handle_clear_request, methods=["DELETE"]))

        super().__init__(
            debug=debug,
            routes=routes,
            lifespan=compose_lifecycle(self.mcp.lifespan, lifespan),
            exception_handlers={HTTPException: _http_exception},
        )

        for skill in skills:
            self._register_skill(skill)
        self.openapi_document = build_openapi(
            sorted(self.skills.values(), key=lambda s: s.name), config.title, config.version
        )
        logger.info(
            "Application ready",
            operation="create_app",
            status="success",
            mcp_path=config.mcp_path,
            edit_endpoints=config.enable_edit_endpoints,
            metrics={"skills": len(self.skills), "tools": len(self.mcp.visible_skills())},
        )

    def _register_skill(self, skill: Skill) -> None:
        """The one registration call: the HTTP route table and the MCP tool table share the record."""
        if skill.name in self.skills:
            raise StartupError(f"skill {skill.name!r} registered twice")
        self.skills[skill.name] = skill
        self.mcp.register(skill)

    # -------------------------------------------------------------------------
    # Skill routes
    # -------------------------------------------------------------------------

    async def list_skills(self, request: Request) -> Response:
        return JSONResponse([skill_summary(self.skills[name]) for name in sorted(self.skills)])

    async def handle_skill_request(self, request: Request) -> Response:
        trace_id_var.set(str(uuid.uuid4()))
        name = request.path_params["name"]
        skill = self.skills.get(name)
        if skill is None:
            return _detail(SKILL_NOT_FOUND, 404)

        body, error = await _read_json(request)
        if error is not None:
            return error

        validated = validate_input(skill, body)
        if isinstance(validated, ValidationErrors):
            logger.info(
                "Request rejected by input schema",
                operation="handle_skill_request",
                status="invalid",
                skill=name,
                metrics={"errors": len(validated.detail)},
            )
            return JSONResponse(validated.to_dict(), status_code=422)

        # Resolved once: a concurrent edit affects later requests only
        binding = effective_binding(skill)
        if JSON_MEDIA_TYPE in request.headers.get("accept", ""):
            return await self._json_response(skill, binding, validated)
        return StreamingResponse(
            stream_sse(skill, binding, validated, self.registry),
            media_type="text/event-stream",
            headers=SSE_HEADERS,
        )

    async def _json_response(self, skill: Skill, binding: HandlerBinding, payload: dict) -> Response:
        start_time = time.perf_counter()
        partial: list[Any] | None = [] if skill.streaming else None
        try:
            if partial is not None:
                chunks = await collect_chunks(skill, binding, payload, self.registry, partial)
                response: Response = JSONResponse({"chunks": [chunk_text(c) for c in chunks]})
            else:
                output = await invoke_unary(
                    binding, payload, skill.meta.timeout_secs, registry=self.registry, skill=skill
                )
                response = JSONResponse(output)
        except HandlerError as exc:
            logger.warning(
                "Handler error",
                operation="handle_skill_request",
                status=exc.kind.value,
                skill=skill.name,
                error=exc.message,
            )
            return _handler_error_response(exc, partial)

        logger.info(
            "Skill invoked",
            operation="handle_skill_request",
            status="success",
            skill=skill.name,
            mode="json",
            metrics={"duration_ms": int((time.perf_counter() - start_time) * 1000)},
        )
        return response

    # -------------------------------------------------------------------------
    # Edit routes
    # -------------------------------------------------------------------------

    async def handle_edit_request(self, request: Request) -> Response:
        trace_id_var.set(str(uuid.uuid4()))
        skill = self.skills.get(request.path_params["name"])
        if skill is None:
            return _detail(SKILL_NOT_FOUND, 404)
        body, error = await _read_json(request)
        if error is not None:
            return error
        try:
            apply_edit_override(skill, body, self.registry)
        except EditOverrideError as exc:
            return _detail(exc.message, 422, kind=exc.kind.value)
        return JSONResponse({"status": "ok"})

    async def handle_clear_request(self, request: Request) -> Response:
        skill = self.skills.get(request.path_params["name"])
        if skill is None:
            return _detail(SKILL_NOT_FOUND, 404)
        clear_edit_override(skill)
        return JSONResponse({"status": "ok"})

    # -------------------------------------------------------------------------
    # Docs + MCP
    # -------------------------------------------------------------------------

    async def openapi_json(self, request: Request) -> Response:
        return JSONResponse(self.openapi_document)

    async def docs(self, request: Request) -> Response:
        return HTMLResponse(docs_html(self.config.title))

    async def handle_mcp(self, request: Request) -> Response:
        trace_id_var.set(str(uuid.uuid4()))
        payload = await self.mcp.handle_jsonrpc(await request.body())
        if payload is None:
            return Response(status_code=202)
        return Response(payload, media_type=JSON_MEDIA_TYPE)


def create_app(
    config: ServerConfig,
    registry: HandlerRegistry | None = None,
    lifespan: Lifespan | None = None,
) -> SkillApp:
    """
    Check the loopback rule, discover skills and build the app.

    Args:
        config: Server configuration
        registry: Handler registry; loaded from ``config.handlers`` when None
        lifespan: Optional user lifespan, nested inside the MCP subsystem's

    Raises:
        StartupError: loopback refusal, missing skills dir, duplicate skill names
        ConfigurationError: the handler registry cannot be imported
    """
    enforce_loopback(config)
    if registry is None:
        registry = load_registry(config.handlers)
    result = discover_many(config.skills_dirs, registry)
    return SkillApp(result.skills, registry, config, lifespan=lifespan)
