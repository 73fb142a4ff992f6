"""Server configuration: defaults < skillserve.toml < environment < CLI flags."""

from __future__ import annotations

import ipaddress
import re
import time
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from loguru import logger

from skillserve import __version__
from skillserve.errors import ConfigurationError, Error, ErrorType, Result

# =============================================================================
# Defaults
# =============================================================================

CONFIG_FILENAME = "skillserve.toml"

DEFAULT_CONFIG: dict[str, Any] = {
    "server": {
        "host": "127.0.0.1",
        "port": 8000,
        "skills_dir": ["skills"],
        "mcp_path": "/mcp",
        "enable_edit_endpoints": False,
        "title": "skillserve",
        "version": __version__,
        "handlers": "skillserve.samples:registry",
    },
}

_TRUTHY = {"1", "true", "yes", "on"}
_FALSY = {"0", "false", "no", "off", ""}


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    skills_dirs: tuple[Path, ...] = field(default_factory=lambda: (Path("skills"),))
    mcp_path: str = "/mcp"
    enable_edit_endpoints: bool = False
    title: str = "skillserve"
    version: str = __version__
    handlers: str = "skillserve.samples:registry"

    def __post_init__(self) -> None:
        if isinstance(self.port, bool) or not isinstance(self.port, int):
            raise ConfigurationError(f"port must be an integer, got {self.port!r}")
        if not 1 <= self.port <= 65535:
            raise ConfigurationError(f"port must be in [1, 65535], got {self.port}")
        if not self.mcp_path.startswith("/"):
            raise ConfigurationError(f"mcp_path must start with '/', got {self.mcp_path!r}")
        if not self.skills_dirs:
            raise ConfigurationError("at least one skills directory is required")

    @property
    def is_loopback(self) -> bool:
        if self.host == "localhost":
            return True
        try:
            return ipaddress.ip_address(self.host).is_loopback
        except ValueError:
            return False


# =============================================================================
# TOML helpers
# =============================================================================


def extract_toml_error_context(error: tomllib.TOMLDecodeError, text: str | None = None) -> dict:
    """
    Extract line/column context from a TOML parse error.

    Args:
        error: The TOMLDecodeError exception
        text: Source text, used to echo the offending line

    Returns:
        Dict with line_number, column, line_content and formatted_message
    """
    error_str = str(error)
    line_number = getattr(error, "lineno", None)
    column = getattr(error, "colno", None)

    if line_number is None:
        # Older interpreters only put the position in the message
        line_match = re.search(r"line\s+(\d+)", error_str, re.IGNORECASE)
        if line_match:
            line_number = int(line_match.group(1))
        col_match = re.search(r"column\s+(\d+)", error_str, re.IGNORECASE)
        if col_match:
            column = int(col_match.group(1))

    line_content = None
    if line_number and text is not None:
        lines = text.splitlines()
        if 0 < line_number <= len(lines):
            line_content = lines[line_number - 1].rstrip()

    if line_number:
        formatted = f"TOML parse error at line {line_number}"
        if column:
            formatted += f", column {column}"
        if line_content:
            display_line = line_content[:50] + "..." if len(line_content) > 50 else line_content
            formatted += f": {display_line}"
    else:
        formatted = f"TOML parse error: {error_str}"

    return {
        "line_number": line_number,
        "column": column,
        "line_content": line_content,
        "formatted_message": formatted,
        "raw_error": error_str,
    }


def deep_merge(base: dict, override: dict) -> dict:
    """Recursively merge override into base dictionary."""
    result = base.copy()
    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = value
    return result


# =============================================================================
# Loading
# =============================================================================


def load_config_file(config_path: Path) -> Result[dict]:
    """
    Load skillserve.toml and merge it over the defaults.

    Relative ``skills_dir`` entries are resolved against the file's directory.

    Args:
        config_path: Path to the TOML file

    Returns:
        Result[dict]: Ok with merged config, or Err with error details
    """
    start_time = time.perf_counter()

    if not config_path.exists():
        return Result.err(Error(
            error_type=ErrorType.FILE_NOT_FOUND,
            message=f"Config file not found: {config_path}",
            context={"config_path": str(config_path)},
        ))

    text = config_path.read_text(encoding="utf-8")
    try:
        user_config = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        error_context = extract_toml_error_context(e, text)
        logger.error(
            "Invalid TOML syntax in configuration file",
            operation="load_config_file",
            status="failed",
            file=str(config_path),
            line_number=error_context["line_number"],
            line_content=error_context["line_content"],
        )
        return Result.err(Error(
            error_type=ErrorType.PARSE_ERROR,
            message=error_context["formatted_message"],
            context={"config_path": str(config_path), "line_number": error_context["line_number"]},
            original_exception=e,
        ))

    server = user_config.get("server", {})
    if isinstance(server, dict) and "skills_dir" in server:
        dirs = server["skills_dir"]
        if isinstance(dirs, str):
            dirs = [dirs]
        base = config_path.parent
        server["skills_dir"] = [str((base / d).resolve()) if not Path(d).is_absolute() else d for d in dirs]

    merged = deep_merge(DEFAULT_CONFIG, user_config)
    logger.debug(
        "Config loaded",
        operation="load_config_file",
        status="success",
        config_path=str(config_path),
        metrics={"duration_ms": int((time.perf_counter() - start_time) * 1000)},
    )
    return Result.ok(merged)


def _as_bool(value: Any, key: str) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUTHY:
        return True
    if text in _FALSY:
        return False
    raise ConfigurationError(f"{key} must be a boolean, got {value!r}")


def _as_port(value: Any) -> int:
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    try:
        return int(str(value).strip())
    except ValueError as e:
        raise ConfigurationError(f"port must be an integer, got {value!r}") from e


def build_server_config(
    file_config: dict | None = None,
    overrides: dict[str, Any] | None = None,
) -> ServerConfig:
    """
    Build a validated ServerConfig.

    Args:
        file_config: Merged config dict (from load_config_file), or None for defaults
        overrides: [server] keys from environment and CLI, None values ignored

    Returns:
        ServerConfig

    Raises:
        ConfigurationError: any value is out of range or of the wrong type
    """
    merged = deep_merge(DEFAULT_CONFIG, file_config or {})
    server = dict(merged["server"])
    for key, value in (overrides or {}).items():
        if value is None or value == ():
            continue
        server[key] = value

    dirs = server["skills_dir"]
    if isinstance(dirs, (str, Path)):
        dirs = [dirs]

    return ServerConfig(
        host=str(server["host"]),
        port=_as_port(server["port"]),
        skills_dirs=tuple(Path(d) for d in dirs),
        mcp_path=str(server["mcp_path"]),
        enable_edit_endpoints=_as_bool(server["enable_edit_endpoints"], "enable_edit_endpoints"),
        title=str(server["title"]),
        version=str(server["version"]),
        handlers=str(server["handlers"]),
    )
