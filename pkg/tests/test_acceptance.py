"""End-to-end checks across both transports on one running app."""

from __future__ import annotations

import json
import os
import random
import sys
import time
from pathlib import Path

import pytest
from click.testing import CliRunner
from starlette.testclient import TestClient

from skillserve import cli
from skillserve.app import create_app
from skillserve.cli import main
from skillserve.config_loader import ServerConfig
from skillserve.registry import HandlerRegistry
from skillserve.schemas import canonicalize
from tests.conftest import ECHO_MODELS, SAMPLE_NAMES, STREAMING_SAMPLES, build_registry, parse_sse, write_skill

GOLDEN = Path(__file__).parent / "golden"
JSON = {"Accept": "application/json"}

WORDS = ["hello", "world", "good", "morning", "cat", "the", "quick", "fox", "día", "naïve"]


def mcp_tool_call(client: TestClient, name: str, arguments: dict) -> dict:
    message = {"jsonrpc": "2.0", "id": 1, "method": "tools/call", "params": {"name": name, "arguments": arguments}}
    return client.post("/mcp", json=message).json()["result"]


# =============================================================================
# Golden SSE bodies
# =============================================================================


@pytest.mark.parametrize(
    ("skill", "payload", "golden"),
    [
        ("echo", {"text": "x"}, "echo_unary.sse"),
        ("vectornorm", {"values": [3, 4]}, "vectornorm_stream.sse"),
        ("sleepy", {"seconds": 5}, "sleepy_timeout.sse"),
    ],
)
def test_sse_body_matches_golden(client, skill, payload, golden):
    response = client.post(f"/skills/{skill}", json=payload)
    assert response.status_code == 200
    assert response.content == (GOLDEN / golden).read_bytes()


# =============================================================================
# Transport agreement
# =============================================================================


def test_input_schema_identical_on_both_transports(sample_client):
    document = sample_client.get("/openapi.json").json()
    tools = sample_client.post("/mcp", json={"jsonrpc": "2.0", "id": 1, "method": "tools/list"}).json()
    for tool in tools["result"]["tools"]:
        request = document["paths"][f"/skills/{tool['name']}"]["post"]["requestBody"]
        assert canonicalize(request["content"]["application/json"]["schema"]) == canonicalize(tool["inputSchema"])


def random_input(rng: random.Random, skill: str) -> dict:
    if skill == "summarize":
        sentences = [
            " ".join(rng.choices(WORDS, k=rng.randint(1, 5))).capitalize() + rng.choice(".!?")
            for _ in range(rng.randint(1, 6))
        ]
        return {"text": " ".join(sentences), "max_length": rng.randint(1, 120)}
    if skill == "translate":
        return {"text": " ".join(rng.choices(WORDS, k=rng.randint(0, 6))), "target": rng.choice(["es", "fr"])}
    values = [rng.choice([rng.randint(-9, 9), round(rng.uniform(-5, 5), 3)]) for _ in range(rng.randint(1, 6))]
    return {"values": values}


@pytest.mark.parametrize("skill", STREAMING_SAMPLES)
def test_streaming_transports_agree(sample_client, skill):
    rng = random.Random(f"agree-{skill}")
    for _ in range(50):
        payload = random_input(rng, skill)
        events = parse_sse(sample_client.post(f"/skills/{skill}", json=payload).text)
        assert events[-1] == ("done", None), payload
        sse_chunks = [data for event, data in events[:-1]]

        json_chunks = sample_client.post(f"/skills/{skill}", json=payload, headers=JSON).json()["chunks"]

        result = mcp_tool_call(sample_client, skill, payload)
        assert result["isError"] is False
        text = result["content"][0]["text"]
        mcp_chunks = text.split("\n") if text else []

        assert sse_chunks == json_chunks == mcp_chunks, payload


def test_unary_transports_agree(sample_client):
    payload = {"text": "Urgent bug in billing, not a question"}
    via_json = sample_client.post("/skills/classify", json=payload, headers=JSON).json()
    events = parse_sse(sample_client.post("/skills/classify", json=payload).text)
    result = mcp_tool_call(sample_client, "classify", payload)
    assert events == [("result", via_json), ("done", None)]
    assert result["structuredContent"] == via_json
    assert json.loads(result["content"][0]["text"]) == via_json


# =============================================================================
# Validation happens before the transport branch
# =============================================================================


def test_invalid_input_never_reaches_the_handler(tmp_path):
    registry = build_registry()
    calls: list[dict] = []

    @registry.handler("counted")
    def counted(payload: dict) -> dict:
        calls.append(payload)
        return payload

    write_skill(tmp_path, "counted", ECHO_MODELS, toml="[skill]\nis_mcp = true\n")
    with TestClient(create_app(ServerConfig(skills_dirs=(tmp_path,)), registry=registry)) as client:
        for headers in ({}, JSON):
            assert client.post("/skills/counted", json={"text": 1}, headers=headers).status_code == 422
        assert mcp_tool_call(client, "counted", {"text": 1})["isError"] is True
        assert calls == []
        assert client.post("/skills/counted", json={"text": "ok"}, headers=JSON).status_code == 200
        assert calls == [{"text": "ok"}]


# =============================================================================
# Timeouts leave nothing behind
# =============================================================================


def test_subprocess_timeout_leaves_no_child(tmp_path):
    pid_file = tmp_path / "pid"
    script = f"import os, time; open({str(pid_file)!r}, 'w').write(str(os.getpid())); time.sleep(10)"
    command = json.dumps([sys.executable, "-c", script])
    skills_dir = tmp_path / "skills"
    write_skill(skills_dir, "stuck", ECHO_MODELS, toml=f"[skill]\ntimeout_secs = 1\n[handler]\ncommand = {command}\n")

    with TestClient(create_app(ServerConfig(skills_dirs=(skills_dir,)), registry=HandlerRegistry())) as client:
        start = time.monotonic()
        response = client.post("/skills/stuck", json={"text": "x"}, headers=JSON)
        assert time.monotonic() - start < 1.5
        assert response.status_code == 504
        assert response.json() == {"detail": "handler timeout after 1s"}

    with pytest.raises(ProcessLookupError):
        os.kill(int(pid_file.read_text()), 0)


# =============================================================================
# Edit endpoints on loopback
# =============================================================================


def test_loopback_edit_round_trip(skills_dir, registry):
    config = ServerConfig(host="localhost", skills_dirs=(skills_dir,), enable_edit_endpoints=True)
    with TestClient(create_app(config, registry=registry)) as client:
        before = client.post("/skills/echo", json={"text": "abc"}, headers=JSON).json()
        assert client.post("/skills/echo/edit", json={"command": ["cat"]}).json() == {"status": "ok"}
        assert mcp_tool_call(client, "echo", {"text": "abc"})["structuredContent"] == before
        assert client.post("/skills/echo/edit", json={"registry_key": "echo_v2"}).status_code == 200
        assert parse_sse(client.post("/skills/echo", json={"text": "abc"}).text)[0] == ("result", {"text": "ABC"})
        client.delete("/skills/echo/edit")
        assert client.post("/skills/echo", json={"text": "abc"}, headers=JSON).json() == before


# =============================================================================
# Compatibility corpus
# =============================================================================


def write_external_corpus(root: Path) -> None:
    """Six third-party style folders: SKILL.md only, plus one skill.toml."""
    write_skill(root, "summarize", skill_md="---\ndescription: from front matter\n---\n",
                toml='[skill]\ndescription = "from manifest"\nstreaming = true\n')
    write_skill(root, "vectornorm", skill_md="---\nname: vectornorm\ndescription: Norms\ntags: [math]\n---\nBody.\n")
    write_skill(root, "echo", skill_md="---\ndescription: Parrot\n---\n")
    write_skill(root, "classify", skill_md="# Classify\n\nNo front matter here.\n")
    write_skill(root, "greet", skill_md="---\ntags: [demo]\n---\n")
    write_skill(root, "translate", skill_md="Just prose.\n")


def test_imported_corpus_serves_with_metadata_priority(monkeypatch, tmp_path):
    monkeypatch.setattr(cli, "setup_logger", lambda *args, **kwargs: None)
    monkeypatch.chdir(tmp_path)
    write_external_corpus(tmp_path / "external")

    result = CliRunner().invoke(main, ["init", "proj", "--skills-dir", str(tmp_path / "external")])
    assert result.exit_code == 0, result.output
    assert result.stdout.count("WARNING: models.json was missing") == 6

    skills_dir = tmp_path / "proj" / "skills"
    config = ServerConfig(skills_dirs=(skills_dir,))
    with TestClient(create_app(config, registry=build_registry())) as client:
        listed = {s["name"]: s for s in client.get("/skills").json()}
        assert sorted(listed) == SAMPLE_NAMES
        assert listed["summarize"]["description"] == "from manifest"
        assert listed["vectornorm"]["description"] == "Norms"
        assert listed["vectornorm"]["tags"] == ["math"]
        assert listed["echo"]["description"] == "Parrot"
        assert listed["classify"]["description"] == "Label text with every matching category."
        assert listed["greet"]["description"] == "Greet someone by name."
        assert listed["translate"]["description"] == "translate"

        assert client.post("/skills/echo", json={"text": "x"}, headers=JSON).json() == {"text": "x"}
        tools = client.post("/mcp", json={"jsonrpc": "2.0", "id": 1, "method": "tools/list"}).json()
        assert len(tools["result"]["tools"]) == 6


def test_new_skill_folder_appears_on_both_transports(skills_dir, registry):
    config = ServerConfig(skills_dirs=(skills_dir,))
    with TestClient(create_app(config, registry=registry)) as client:
        before = {s["name"] for s in client.get("/skills").json()}
    assert "shout" not in before

    write_skill(skills_dir, "shout", ECHO_MODELS, toml='[skill]\nis_mcp = true\n[handler]\ncommand = ["cat"]\n')
    with TestClient(create_app(config, registry=registry)) as client:
        assert {s["name"] for s in client.get("/skills").json()} == before | {"shout"}
        assert "/skills/shout" in client.get("/openapi.json").json()["paths"]
        tools = client.post("/mcp", json={"jsonrpc": "2.0", "id": 1, "method": "tools/list"}).json()
        assert "shout" in [t["name"] for t in tools["result"]["tools"]]
        assert mcp_tool_call(client, "shout", {"text": "hi"})["structuredContent"] == {"text": "hi"}
