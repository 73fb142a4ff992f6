"""Structured logging setup (JSONL on stderr, rotating file under the user log dir)."""

from __future__ import annotations

import json
import logging
import os
import sys
import threading
import traceback
from contextvars import ContextVar
from pathlib import Path

import platformdirs
from loguru import logger

COMPONENT = "skillserve"

# Correlation ID for one HTTP or JSON-RPC request
trace_id_var: ContextVar[str | None] = ContextVar("trace_id", default=None)


def json_sink(message) -> None:
    """JSONL sink - writes one object per record to stderr."""
    record = message.record
    log_entry = {
        "timestamp": record["time"].strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z",
        "level": record["level"].name.lower(),
        "component": COMPONENT,
        "logger": record["name"],
        "function": record["function"],
        "pid": os.getpid(),
        "tid": threading.current_thread().ident,
        "operation": record["extra"].get("operation", "unknown"),
        "operation_status": record["extra"].get("status"),
        "trace_id": record["extra"].get("trace_id") or trace_id_var.get(),
        "message": record["message"],
        "context": {
            k: v for k, v in record["extra"].items()
            if k not in ("operation", "status", "trace_id", "metrics")
        },
        "metrics": record["extra"].get("metrics", {}),
        "error": None,
    }

    if record["exception"]:
        exc_type, exc_value, exc_tb = record["exception"]
        tb_lines = traceback.format_tb(exc_tb) if exc_tb else []
        log_entry["error"] = {
            "type": exc_type.__name__ if exc_type else "Unknown",
            "message": str(exc_value) if exc_value else "Unknown error",
            "traceback_lines": tb_lines,
        }

    # Logging must never take the server down
    try:
        sys.stderr.write(json.dumps(log_entry, default=str) + "\n")
        sys.stderr.flush()
    except (OSError, TypeError, ValueError) as e:
        try:
            sys.stderr.write(f"[LOG_ERROR] Failed to write log: {e}\n")
        except OSError:
            pass


class InterceptHandler(logging.Handler):
    """Forward standard-library records (uvicorn, starlette) into loguru."""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            level: str | int = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        frame, depth = logging.currentframe(), 2
        while frame is not None and frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        # bind(): uvicorn messages carry request paths, which may contain braces
        logger.bind(operation=record.name).opt(depth=depth, exception=record.exc_info).log(
            level, record.getMessage()
        )


def setup_logger(level: str = "INFO", log_to_file: bool = True):
    """Configure loguru for machine-readable JSONL output."""
    logger.remove()
    logger.add(json_sink, level=level.upper())

    if log_to_file:
        # macOS: ~/Library/Logs/skillserve/
        # Linux: ~/.local/state/skillserve/log/
        log_dir = Path(platformdirs.user_log_dir(appname=COMPONENT, ensure_exists=True))
        logger.add(
            str(log_dir / "server.jsonl"),
            format="{message}",
            serialize=True,
            rotation="10 MB",
            retention="7 days",
            compression="gz",
            level="DEBUG",
        )

    for name in ("uvicorn", "uvicorn.error", "uvicorn.access"):
        std_logger = logging.getLogger(name)
        std_logger.handlers = [InterceptHandler()]
        std_logger.setLevel(logging.DEBUG)
        std_logger.propagate = False

    return logger
