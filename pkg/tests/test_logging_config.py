"""JSONL log output and the stdlib intercept used for uvicorn."""

from __future__ import annotations

import json
import logging

import pytest
from loguru import logger

from skillserve.logging_config import setup_logger, trace_id_var


@pytest.fixture
def jsonl(capsys):
    setup_logger("DEBUG", log_to_file=False)
    yield lambda: [json.loads(line) for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    logger.remove()


def test_record_shape(jsonl):
    token = trace_id_var.set("trace-1")
    try:
        logger.info("Skill invoked", operation="handle_skill_request", status="success", skill="echo",
                    metrics={"duration_ms": 3})
    finally:
        trace_id_var.reset(token)
    [entry] = jsonl()
    assert entry["level"] == "info"
    assert entry["component"] == "skillserve"
    assert entry["operation"] == "handle_skill_request"
    assert entry["operation_status"] == "success"
    assert entry["trace_id"] == "trace-1"
    assert entry["context"] == {"skill": "echo"}
    assert entry["metrics"] == {"duration_ms": 3}


def test_access_log_with_braces_in_path(jsonl):
    access = logging.getLogger("uvicorn.access")
    access.info('%s - "%s %s HTTP/%s" %d', "127.0.0.1:5000", "GET", "/skills/{name}", "1.1", 404)
    [entry] = jsonl()
    assert entry["operation"] == "uvicorn.access"
    assert entry["message"] == '127.0.0.1:5000 - "GET /skills/{name} HTTP/1.1" 404'


def test_uvicorn_error_log_is_intercepted(jsonl):
    logging.getLogger("uvicorn.error").warning("Invalid HTTP request received {oops}")
    [entry] = jsonl()
    assert entry["level"] == "warning"
    assert entry["message"] == "Invalid HTTP request received {oops}"
