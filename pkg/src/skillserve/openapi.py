"""OpenAPI 3.1 document and Swagger UI page, generated from discovered skills."""

from __future__ import annotations

import html
from typing import Any

from skillserve.schemas import transport_schema
from skillserve.skill import Skill

OPENAPI_VERSION = "3.1.0"

SSE_MEDIA_TYPE = "text/event-stream"
JSON_MEDIA_TYPE = "application/json"

_ERROR_STATUSES = {
    "400": "Request body is not valid JSON",
    "404": "Skill not found",
    "500": "Handler failed",
    "504": "Handler timed out",
}

COMMON_SCHEMAS: dict[str, Any] = {
    "ValidationError": {
        "type": "object",
        "required": ["loc", "msg", "type"],
        "properties": {
            "loc": {"type": "array", "items": {"anyOf": [{"type": "string"}, {"type": "integer"}]}},
            "msg": {"type": "string"},
            "type": {"type": "string"},
        },
    },
    "HTTPValidationError": {
        "type": "object",
        "required": ["detail"],
        "properties": {
            "detail": {"type": "array", "items": {"$ref": "#/components/schemas/ValidationError"}},
        },
    },
    "ErrorDetail": {
        "type": "object",
        "required": ["detail"],
        "properties": {
            "detail": {"type": "string"},
            "partial_chunks": {"type": "array", "items": {"type": "string"}},
        },
    },
    "ChunkList": {
        "type": "object",
        "required": ["chunks"],
        "properties": {"chunks": {"type": "array", "items": {"type": "string"}}},
    },
    "SkillSummary": {
        "type": "object",
        "required": ["name", "description", "tags", "streaming", "is_mcp", "timeout_secs"],
        "properties": {
            "name": {"type": "string"},
            "description": {"type": "string"},
            "tags": {"type": "array", "items": {"type": "string"}},
            "streaming": {"type": "boolean"},
            "is_mcp": {"type": "boolean"},
            "timeout_secs": {"type": "number"},
        },
    },
}


def _ref(name: str) -> dict:
    return {"$ref": f"#/components/schemas/{name}"}


def _component_names(skill: Skill) -> tuple[str, str]:
    input_name = skill.input_schema.component_name
    output_name = skill.output_schema.component_name
    if output_name == input_name:
        output_name = f"{skill.name}.Output"
    return input_name, output_name


def _skill_operation(skill: Skill) -> dict:
    request_media: dict[str, Any] = {"schema": transport_schema(skill)}
    if skill.defaults is not None:
        request_media["example"] = skill.defaults

    json_body = _ref("ChunkList") if skill.streaming else _ref(_component_names(skill)[1])
    responses: dict[str, Any] = {
        "200": {
            "description": (
                "Chunk events as produced (SSE), or all chunks buffered (JSON)"
                if skill.streaming
                else "One result event then done (SSE), or the output object (JSON)"
            ),
            "content": {
                SSE_MEDIA_TYPE: {"schema": {"type": "string"}},
                JSON_MEDIA_TYPE: {"schema": json_body},
            },
        },
        "422": {
            "description": "Validation Error",
            "content": {JSON_MEDIA_TYPE: {"schema": _ref("HTTPValidationError")}},
        },
    }
    for status, description in _ERROR_STATUSES.items():
        responses[status] = {
            "description": description,
            "content": {JSON_MEDIA_TYPE: {"schema": _ref("ErrorDetail")}},
        }

    return {
        "operationId": f"invoke_{skill.name}",
        "summary": skill.name,
        "description": skill.meta.description,
        "tags": list(skill.meta.tags),
        "requestBody": {"required": True, "content": {JSON_MEDIA_TYPE: request_media}},
        "responses": responses,
        "x-streaming": skill.streaming,
        "x-mcp-tool": skill.meta.is_mcp,
    }


def build_openapi(skills: list[Skill], title: str, version: str) -> dict:
    """
    Build the OpenAPI 3.1 document.

    Args:
        skills: Discovered skills
        title: info.title
        version: info.version

    Returns:
        The document as a JSON-ready dict
    """
    components: dict[str, Any] = dict(COMMON_SCHEMAS)
    paths: dict[str, Any] = {
        "/skills": {
            "get": {
                "operationId": "list_skills",
                "summary": "List skills",
                "responses": {
                    "200": {
                        "description": "Skill summaries sorted by name",
                        "content": {
                            JSON_MEDIA_TYPE: {"schema": {"type": "array", "items": _ref("SkillSummary")}}
                        },
                    }
                },
            }
        }
    }

    tag_names: set[str] = set()
    for skill in sorted(skills, key=lambda s: s.name):
        input_name, output_name = _component_names(skill)
        components[input_name] = transport_schema(skill)
        components[output_name] = skill.output_schema.resolved
        paths[f"/skills/{skill.name}"] = {"post": _skill_operation(skill)}
        tag_names.update(skill.meta.tags)

    return {
        "openapi": OPENAPI_VERSION,
        "info": {"title": title, "version": version},
        "paths": paths,
        "components": {"schemas": components},
        "tags": [{"name": name} for name in sorted(tag_names)],
    }


DOCS_HTML = """<!DOCTYPE html>
<html>
<head>
  <meta charset="utf-8">
  <title>{title} - Swagger UI</title>
  <link rel="stylesheet" href="https://cdn.jsdelivr.net/npm/swagger-ui-dist@5/swagger-ui.css">
</head>
<body>
  <div id="swagger-ui"></div>
  <script src="https://cdn.jsdelivr.net/npm/swagger-ui-dist@5/swagger-ui-bundle.js"></script>
  <script>
    window.ui = SwaggerUIBundle({{url: "{openapi_url}", dom_id: "#swagger-ui"}});
  </script>
</body>
</html>
"""


def docs_html(title: str, openapi_url: str = "/openapi.json") -> str:
    return DOCS_HTML.format(title=html.escape(title), openapi_url=openapi_url)
