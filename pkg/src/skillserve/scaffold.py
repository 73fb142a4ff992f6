"""Project and skill-folder scaffolding used by ``skillserve init``."""

from __future__ import annotations

import json
import os
import re
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from loguru import logger

from skillserve.config_loader import CONFIG_FILENAME
from skillserve.discovery import MANIFEST_FILE, MODELS_FILE, parse_skill_toml
from skillserve.errors import ScaffoldError

SAMPLE_SKILLS_DIR = Path(__file__).parent / "samples" / "skills"
SAMPLE_SKILL = "echo"

MODELS_STUB = {"input": {"type": "object"}, "output": {"type": "object"}}

PROJECT_CONFIG = """\
# skillserve project configuration
# Environment (HOST, PORT, SKILLS_DIR, MCP_PATH, ENABLE_EDIT_ENDPOINTS,
# SKILLSERVE_HANDLERS) and CLI flags override these values.

[server]
host = "127.0.0.1"
port = 8000
skills_dir = ["skills"]
mcp_path = "/mcp"
enable_edit_endpoints = false
handlers = "skillserve.samples:registry"
"""

_IGNORED = shutil.ignore_patterns("__pycache__", ".git", ".DS_Store")


def atomic_write_file(path: Path, content: str) -> None:
    """
    Write file atomically using temp file → fsync → rename pattern.

    Args:
        path: Target file path
        content: Content to write

    Raises:
        OSError: If write fails (including disk full - errno.ENOSPC)
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_fd, temp_path = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(temp_fd, "w", encoding="utf-8") as f:
            f.write(content)
            f.flush()
            os.fsync(f.fileno())
        os.replace(temp_path, path)
        logger.debug("Atomic file write successful", operation="atomic_write_file", path=str(path))
    except OSError:
        try:
            os.unlink(temp_path)
        except OSError:
            pass
        raise


# =============================================================================
# Project init
# =============================================================================


def init_project(target: Path, force: bool = False) -> list[Path]:
    """
    Write a project skeleton: skillserve.toml and skills/echo.

    Args:
        target: Project directory, absent or empty unless ``force``
        force: Allow a non-empty target (existing files are overwritten)

    Returns:
        Created paths, relative to ``target``

    Raises:
        ScaffoldError: target is a non-empty directory (without force) or a file
    """
    if target.exists() and not target.is_dir():
        raise ScaffoldError(f"{target} exists and is not a directory")
    if target.is_dir() and any(target.iterdir()) and not force:
        raise ScaffoldError(f"{target} is not empty (use --force to write anyway)")

    target.mkdir(parents=True, exist_ok=True)
    atomic_write_file(target / CONFIG_FILENAME, PROJECT_CONFIG)

    skill_dest = target / "skills" / SAMPLE_SKILL
    if skill_dest.exists():
        shutil.rmtree(skill_dest)
    shutil.copytree(SAMPLE_SKILLS_DIR / SAMPLE_SKILL, skill_dest, ignore=_IGNORED)

    created = sorted(p.relative_to(target) for p in target.rglob("*") if p.is_file())
    logger.info(
        "Project initialized",
        operation="init_project",
        status="success",
        target=str(target),
        metrics={"files": len(created)},
    )
    return created


# =============================================================================
# Skill import / normalization
# =============================================================================


@dataclass
class NormalizedSkill:
    name: str
    path: Path
    stubbed_models: bool = False
    notes: list[str] = field(default_factory=list)


def normalize_name(raw: str) -> str:
    """Lowercase and replace anything outside [a-z0-9_-] with '-'."""
    name = re.sub(r"[^a-z0-9_-]+", "-", raw.strip().lower()).strip("-")
    return name


def _has_command(skill_dir: Path) -> bool:
    manifest = skill_dir / MANIFEST_FILE
    if not manifest.is_file():
        return False
    result = parse_skill_toml(manifest.read_text(encoding="utf-8"))
    return bool(result.is_ok() and result.value is not None and result.value.command)


def normalize_skill(source: Path, skills_dir: Path, force: bool = False) -> NormalizedSkill:
    """
    Copy one external skill folder into ``skills_dir`` in skillserve layout.

    A missing models.json is replaced by an accept-anything stub; the result
    carries a note saying so.

    Raises:
        ScaffoldError: unreadable source, unusable name, or an existing
            destination without ``force``
    """
    if not source.is_dir() or not os.access(source, os.R_OK | os.X_OK):
        raise ScaffoldError(f"cannot read skill folder {source}")
    name = normalize_name(source.name)
    if not name:
        raise ScaffoldError(f"cannot derive a skill name from {source.name!r}")

    dest = skills_dir / name
    if dest.exists():
        if not force:
            raise ScaffoldError(f"{dest} already exists (use --force to replace it)")
        shutil.rmtree(dest)
    try:
        shutil.copytree(source, dest, ignore=_IGNORED)
    except OSError as e:
        raise ScaffoldError(f"cannot copy {source}: {e}") from e

    result = NormalizedSkill(name=name, path=dest)
    if name != source.name:
        result.notes.append(f"renamed {source.name!r} to {name!r}")
    if not (dest / MODELS_FILE).is_file():
        atomic_write_file(dest / MODELS_FILE, json.dumps(MODELS_STUB, indent=2) + "\n")
        result.stubbed_models = True
        result.notes.append(
            f"WARNING: {MODELS_FILE} was missing; wrote a stub that accepts any object. "
            "Replace it with real input/output schemas."
        )
    if not _has_command(dest):
        result.notes.append(
            f"binding: needs a registered handler named {name!r} or [handler] command in {MANIFEST_FILE}"
        )
        if (dest / "scripts").is_dir():
            result.notes.append(
                f"scripts/ found; declare the entry script as [handler] command in {MANIFEST_FILE} to run it"
            )

    logger.info(
        "Skill imported",
        operation="normalize_skill",
        status="success",
        source=str(source),
        skill=name,
        stubbed_models=result.stubbed_models,
    )
    return result


def init_skills_dir(source_dir: Path, skills_dir: Path, force: bool = False) -> list[NormalizedSkill]:
    """Normalize every immediate subfolder of ``source_dir``."""
    if not source_dir.is_dir():
        raise ScaffoldError(f"cannot read skills directory {source_dir}")
    folders = sorted(p for p in source_dir.iterdir() if p.is_dir() and not p.name.startswith((".", "_")))
    return [normalize_skill(folder, skills_dir, force=force) for folder in folders]
