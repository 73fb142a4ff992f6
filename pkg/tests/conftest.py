"""Shared fixtures: a handler registry with fault-injection handlers and a skills tree."""

from __future__ import annotations

import asyncio
import json
import shutil
from pathlib import Path
from typing import Any

import pytest
from starlette.testclient import TestClient

from skillserve.app import SkillApp, create_app
from skillserve.config_loader import ServerConfig
from skillserve.discovery import discover
from skillserve.registry import HandlerRegistry
from skillserve.samples import registry as sample_registry
from skillserve.scaffold import SAMPLE_SKILLS_DIR
from skillserve.schemas import SchemaDoc
from skillserve.skill import HandlerBinding, Skill, SkillMetadata

SAMPLE_NAMES = ["classify", "echo", "greet", "summarize", "translate", "vectornorm"]
STREAMING_SAMPLES = ["summarize", "translate", "vectornorm"]

ECHO_MODELS: dict[str, Any] = json.loads((SAMPLE_SKILLS_DIR / "echo" / "models.json").read_text())


@pytest.fixture
def anyio_backend() -> str:
    return "asyncio"


def write_skill(
    root: Path,
    name: str,
    models: dict | None = None,
    toml: str | None = None,
    skill_md: str | None = None,
    files: dict[str, Any] | None = None,
) -> Path:
    """Create a skill folder; ``files`` maps relative paths to JSON values or text."""
    folder = root / name
    folder.mkdir(parents=True, exist_ok=True)
    if models is not None:
        (folder / "models.json").write_text(json.dumps(models))
    if toml is not None:
        (folder / "skill.toml").write_text(toml)
    if skill_md is not None:
        (folder / "SKILL.md").write_text(skill_md)
    for rel, content in (files or {}).items():
        target = folder / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(content if isinstance(content, str) else json.dumps(content))
    return folder


def make_skill(
    name: str = "echo",
    binding: HandlerBinding | None = None,
    meta: SkillMetadata | None = None,
    models: dict | None = None,
    **kwargs: Any,
) -> Skill:
    models = models or ECHO_MODELS
    return Skill(
        name=name,
        meta=meta or SkillMetadata(),
        input_schema=SchemaDoc(models["input"], name, "input"),
        output_schema=SchemaDoc(models["output"], name, "output"),
        binding=binding or HandlerBinding.in_process(name, False),
        **kwargs,
    )


# =============================================================================
# Registry with fault-injection handlers
# =============================================================================


def build_registry() -> HandlerRegistry:
    registry = HandlerRegistry()
    for key in sample_registry.keys():
        entry = sample_registry.get(key)
        assert entry is not None
        registry.register(key, entry.handler, entry.description)

    @registry.handler("sleepy")
    async def sleepy(payload: dict) -> dict:
        """Sleep, then answer."""
        await asyncio.sleep(payload.get("seconds", 2))
        return {"text": "late"}

    @registry.handler("sleepy_stream")
    async def sleepy_stream(payload: dict):
        yield "first"
        await asyncio.sleep(payload.get("seconds", 2))
        yield "never"

    @registry.handler("flaky")
    async def flaky(payload: dict):
        yield "one"
        yield "two"
        raise RuntimeError("stream broke")

    @registry.handler("empty")
    async def empty(payload: dict):
        return
        yield

    @registry.handler("wrong")
    def wrong(payload: dict) -> dict:
        return {"wrong": True}

    @registry.handler("boom")
    def boom(payload: dict) -> dict:
        raise RuntimeError("boom")

    return registry


@pytest.fixture
def registry() -> HandlerRegistry:
    return build_registry()


SLEEPY_MODELS = {
    "input": {"type": "object", "properties": {"seconds": {"type": "number"}}},
    "output": {"type": "object", "properties": {"text": {"type": "string"}}},
}
CHUNK_MODELS = {
    "input": {"type": "object"},
    "output": {"type": "object", "properties": {"chunks": {"type": "array"}}},
}


@pytest.fixture
def skills_dir(tmp_path: Path) -> Path:
    """The six sample skills plus timeout/fault fixtures."""
    root = tmp_path / "skills"
    shutil.copytree(SAMPLE_SKILLS_DIR, root)
    write_skill(root, "sleepy", SLEEPY_MODELS, toml="[skill]\ntimeout_secs = 1\nis_mcp = true\n")
    write_skill(root, "sleepy_stream", CHUNK_MODELS, toml="[skill]\ntimeout_secs = 1\n")
    write_skill(root, "flaky", CHUNK_MODELS)
    write_skill(root, "empty", CHUNK_MODELS)
    write_skill(root, "wrong", ECHO_MODELS)
    write_skill(root, "boom", ECHO_MODELS)
    return root


@pytest.fixture
def skills(skills_dir: Path, registry: HandlerRegistry) -> dict[str, Skill]:
    return {skill.name: skill for skill in discover(skills_dir, registry)}


@pytest.fixture
def sample_skills() -> dict[str, Skill]:
    return {skill.name: skill for skill in discover(SAMPLE_SKILLS_DIR, sample_registry)}


@pytest.fixture
def app(skills_dir: Path, registry: HandlerRegistry) -> SkillApp:
    config = ServerConfig(skills_dirs=(skills_dir,), enable_edit_endpoints=True)
    return create_app(config, registry=registry)


@pytest.fixture
def client(app: SkillApp):
    with TestClient(app) as c:
        yield c


@pytest.fixture
def sample_client():
    """The bundled sample project exactly as ``skillserve serve`` would run it."""
    config = ServerConfig(skills_dirs=(SAMPLE_SKILLS_DIR,))
    with TestClient(create_app(config, registry=sample_registry)) as c:
        yield c


def parse_sse(body: str) -> list[tuple[str, Any]]:
    """Split an SSE body into (event, decoded data) pairs."""
    events = []
    for block in body.split("\n\n"):
        if not block:
            continue
        lines = block.split("\n")
        assert len(lines) == 2, f"unexpected SSE block: {block!r}"
        assert lines[0].startswith("event: ") and lines[1].startswith("data: ")
        events.append((lines[0][len("event: "):], json.loads(lines[1][len("data: "):])))
    return events


def mcp_call(client: TestClient, method: str, params: dict | None = None, request_id: int = 1) -> dict:
    message: dict[str, Any] = {"jsonrpc": "2.0", "id": request_id, "method": method}
    if params is not None:
        message["params"] = params
    response = client.post("/mcp", json=message)
    assert response.status_code == 200
    return response.json()
