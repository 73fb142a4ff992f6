"""Skill discovery: walk a skills directory and turn each folder into a Skill.

Folder contract (depth 1 only)::

    skills/<name>/
        models.json          required  {"input": <schema>, "output": <schema>}
        skill.toml           optional  [skill] metadata, [handler] command
        SKILL.md             optional  front-matter name/description/tags
        defaults/input.json  optional  request example, must validate
        examples/*.json      optional  {"input": ..., "output": ...}

A folder also needs a handler binding: a registry entry named after the folder,
or ``[handler].command`` in skill.toml (which wins when both exist).
"""

from __future__ import annotations

import json
import re
import time
import tomllib
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from loguru import logger

from skillserve.config_loader import extract_toml_error_context
from skillserve.errors import (
    ConfigurationError,
    Error,
    ErrorReport,
    ErrorType,
    Result,
    StartupError,
)
from skillserve.registry import HandlerRegistry
from skillserve.schemas import SchemaDoc, SchemaRegistry, ValidationErrors, validate_payload
from skillserve.skill import (
    SKILL_NAME_RE,
    Example,
    HandlerBinding,
    MetadataSource,
    Origin,
    Skill,
    merge_metadata,
)

MODELS_FILE = "models.json"
MANIFEST_FILE = "skill.toml"
SKILL_MD_FILE = "SKILL.md"
DEFAULTS_FILE = Path("defaults") / "input.json"
EXAMPLES_DIR = "examples"

MISSING_BINDING = "handler binding"

_SKILL_KEYS = {"description", "is_mcp", "tags", "timeout_secs", "streaming"}
_HANDLER_KEYS = {"command"}


# =============================================================================
# Types
# =============================================================================


@dataclass
class FolderReport:
    path: Path
    missing: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.missing

    @property
    def name(self) -> str:
        return self.path.name

    def to_dict(self) -> dict:
        return {
            "path": str(self.path),
            "name": self.name,
            "valid": self.valid,
            "missing": list(self.missing),
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class FrontMatterMeta:
    name: str | None = None
    description: str | None = None
    tags: list[str] | None = None


@dataclass
class SkillManifest:
    """Parsed skill.toml: the toml metadata source plus binding extensions."""

    source: MetadataSource
    streaming: bool | None = None
    command: tuple[str, ...] | None = None
    warnings: list[str] = field(default_factory=list)


@dataclass
class DiscoveryResult:
    skills: list[Skill]
    reports: list[FolderReport]
    schemas: SchemaRegistry


# =============================================================================
# skill.toml
# =============================================================================


def _manifest_error(message: str, **context: Any) -> Result[SkillManifest]:
    return Result.err(Error(error_type=ErrorType.VALIDATION_ERROR, message=message, context=context))


def parse_skill_toml(text: str) -> Result[SkillManifest]:
    """
    Parse skill.toml text.

    Recognized keys: ``[skill]`` description, is_mcp, tags, timeout_secs,
    streaming; ``[handler]`` command. Unknown keys and tables become warnings.

    Returns:
        Result[SkillManifest]: Err carries the line/column of syntax errors
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        error_context = extract_toml_error_context(e, text)
        return Result.err(Error(
            error_type=ErrorType.PARSE_ERROR,
            message=f"{MANIFEST_FILE}: {error_context['formatted_message']}",
            context={"line_number": error_context["line_number"], "column": error_context["column"]},
            original_exception=e,
        ))

    warnings: list[str] = []
    for table in sorted(set(data) - {"skill", "handler"}):
        warnings.append(f"{MANIFEST_FILE}: unknown key '{table}' ignored")

    skill = data.get("skill", {})
    handler = data.get("handler", {})
    if not isinstance(skill, dict):
        return _manifest_error(f"{MANIFEST_FILE}: 'skill' must be a table")
    if not isinstance(handler, dict):
        return _manifest_error(f"{MANIFEST_FILE}: 'handler' must be a table")
    for key in sorted(set(skill) - _SKILL_KEYS):
        warnings.append(f"{MANIFEST_FILE}: unknown key 'skill.{key}' ignored")
    for key in sorted(set(handler) - _HANDLER_KEYS):
        warnings.append(f"{MANIFEST_FILE}: unknown key 'handler.{key}' ignored")

    description = skill.get("description")
    if description is not None and not isinstance(description, str):
        return _manifest_error(f"{MANIFEST_FILE}: skill.description must be a string")

    is_mcp = skill.get("is_mcp")
    if is_mcp is not None and not isinstance(is_mcp, bool):
        return _manifest_error(f"{MANIFEST_FILE}: skill.is_mcp must be a boolean")

    tags = skill.get("tags")
    if tags is not None and (
        not isinstance(tags, list) or not all(isinstance(t, str) and t for t in tags)
    ):
        return _manifest_error(f"{MANIFEST_FILE}: skill.tags must be an array of non-empty strings")

    timeout_secs = skill.get("timeout_secs")
    if timeout_secs is not None:
        if isinstance(timeout_secs, bool) or not isinstance(timeout_secs, (int, float)) or timeout_secs <= 0:
            return _manifest_error(f"{MANIFEST_FILE}: skill.timeout_secs must be a positive number")
        timeout_secs = float(timeout_secs)

    streaming = skill.get("streaming")
    if streaming is not None and not isinstance(streaming, bool):
        return _manifest_error(f"{MANIFEST_FILE}: skill.streaming must be a boolean")

    command = handler.get("command")
    if command is not None:
        if not isinstance(command, list) or not command or not all(isinstance(c, str) and c for c in command):
            return _manifest_error(f"{MANIFEST_FILE}: handler.command must be a non-empty array of strings")
        command = tuple(command)

    return Result.ok(SkillManifest(
        source=MetadataSource(
            origin=Origin.TOML,
            description=description,
            tags=list(tags) if tags is not None else None,
            is_mcp=is_mcp,
            timeout_secs=timeout_secs,
        ),
        streaming=streaming,
        command=command,
        warnings=warnings,
    ))


# =============================================================================
# SKILL.md front-matter
# =============================================================================

_KEY_RE = re.compile(r"^([A-Za-z_][\w-]*)\s*:(.*)$")
_LIST_ITEM_RE = re.compile(r"^\s*-\s*(.*)$")
_BLOCK_INDICATORS = {">", ">-", ">+", "|", "|-", "|+"}
_FRONT_MATTER_KEYS = ("name", "description", "tags")


def _unquote(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "'\"":
        inner = value[1:-1]
        if value[0] == "'":
            return inner.replace("''", "'")
        return inner.replace('\\"', '"').replace("\\\\", "\\")
    # Trailing comment on a plain scalar
    hash_at = value.find(" #")
    if hash_at != -1:
        value = value[:hash_at].rstrip()
    return value


def _inline_list(value: str) -> list[str]:
    inner = value.strip()[1:-1]
    return [item for item in (_unquote(part) for part in inner.split(",")) if item]


def parse_front_matter(text: str, warnings: list[str] | None = None) -> FrontMatterMeta | None:
    """
    Read name/description/tags from a ``---`` fenced block at the top of SKILL.md.

    Supports plain and quoted scalars, ``>``/``|`` block scalars, indented
    continuation lines, inline ``[a, b]`` lists and dash lists. Other keys are
    skipped along with their nested lines.

    Args:
        text: Whole SKILL.md document
        warnings: Receives a message when the opening fence is never closed

    Returns:
        FrontMatterMeta, or None when the document has no (closed) front-matter
    """
    lines = text.lstrip("\ufeff").splitlines()
    if not lines or lines[0].strip() != "---":
        return None
    closing = next((i for i in range(1, len(lines)) if lines[i].strip() == "---"), None)
    if closing is None:
        if warnings is not None:
            warnings.append(f"{SKILL_MD_FILE}: front-matter fence is not closed; ignoring it")
        return None

    body = lines[1:closing]
    found: dict[str, Any] = {}
    i = 0
    while i < len(body):
        line = body[i]
        i += 1
        if not line.strip() or line.lstrip().startswith("#") or line[:1].isspace():
            continue
        match = _KEY_RE.match(line)
        if not match:
            continue
        key, value = match.group(1), match.group(2).strip()

        # Gather the indented lines (and dash items) that belong to this key
        nested: list[str] = []
        while i < len(body) and (not body[i].strip() or body[i][:1].isspace() or body[i].startswith("-")):
            nested.append(body[i])
            i += 1
        while nested and not nested[-1].strip():
            nested.pop()

        if key not in _FRONT_MATTER_KEYS:
            continue

        if value in _BLOCK_INDICATORS:
            stripped = [n.strip() for n in nested]
            if value.startswith("|"):
                found[key] = "\n".join(stripped)
            else:
                found[key] = " ".join(s for s in stripped if s)
        elif value.startswith("[") and value.endswith("]"):
            found[key] = _inline_list(value)
        elif not value:
            items = [_LIST_ITEM_RE.match(n) for n in nested if n.strip()]
            if items and all(items):
                found[key] = [v for v in (_unquote(m.group(1)) for m in items if m) if v]
            elif nested:
                found[key] = " ".join(n.strip() for n in nested if n.strip())
        else:
            parts = [_unquote(value)] + [n.strip() for n in nested if n.strip()]
            found[key] = " ".join(parts)

    tags = found.get("tags")
    if isinstance(tags, str):
        tags = [tags] if tags else None
    name = found.get("name")
    description = found.get("description")
    return FrontMatterMeta(
        name=name if isinstance(name, str) else None,
        description=description if isinstance(description, str) else None,
        tags=tags,
    )


# =============================================================================
# Folder validation
# =============================================================================


@dataclass
class _FolderParts:
    name: str
    input_schema: SchemaDoc
    output_schema: SchemaDoc
    binding: HandlerBinding
    sources: list[MetadataSource]
    defaults: Any = None
    examples: list[Example] = field(default_factory=list)


def _read_json(path: Path) -> tuple[Any, str | None]:
    try:
        return json.loads(path.read_text(encoding="utf-8")), None
    except json.JSONDecodeError as e:
        return None, f"{path.name}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}"
    except (OSError, UnicodeDecodeError) as e:
        return None, f"{path.name}: unreadable: {e}"


def _load_models(path: Path, name: str, report: FolderReport) -> tuple[SchemaDoc, SchemaDoc] | None:
    models_path = path / MODELS_FILE
    if not models_path.is_file():
        report.missing.append(MODELS_FILE)
        return None
    models, problem = _read_json(models_path)
    if problem is None and not (
        isinstance(models, dict) and isinstance(models.get("input"), dict) and isinstance(models.get("output"), dict)
    ):
        problem = f'{MODELS_FILE}: expected {{"input": <schema>, "output": <schema>}}'
    if problem is None:
        try:
            return SchemaDoc(models["input"], name, "input"), SchemaDoc(models["output"], name, "output")
        except ConfigurationError as e:
            problem = f"{MODELS_FILE}: {e}"
    report.missing.append(MODELS_FILE)
    report.warnings.append(problem)
    return None


def _load_examples(path: Path, input_schema: SchemaDoc, report: FolderReport) -> list[Example]:
    examples_dir = path / EXAMPLES_DIR
    if not examples_dir.is_dir():
        return []
    examples: list[Example] = []
    for example_path in sorted(examples_dir.glob("*.json")):
        data, problem = _read_json(example_path)
        if problem is None and not (isinstance(data, dict) and "input" in data and "output" in data):
            problem = f'{example_path.name}: expected {{"input": ..., "output": ...}}'
        if problem is None and isinstance(validate_payload(input_schema, data["input"]), ValidationErrors):
            problem = f"{EXAMPLES_DIR}/{example_path.name}: input does not match the input schema"
        if problem is not None:
            report.warnings.append(f"{problem}; example skipped")
            continue
        examples.append(Example(input=data["input"], output=data["output"], source_file=example_path))
    return examples


def _inspect_folder(path: Path, registry: HandlerRegistry) -> tuple[FolderReport, _FolderParts | None]:
    report = FolderReport(path=path)
    name = path.name.lower()
    if not SKILL_NAME_RE.match(name):
        report.missing.append("valid folder name")
        report.warnings.append(f"folder name {path.name!r} must match [a-z0-9_-]+")

    models = _load_models(path, name, report)

    manifest: SkillManifest | None = None
    manifest_path = path / MANIFEST_FILE
    if manifest_path.is_file():
        try:
            result = parse_skill_toml(manifest_path.read_text(encoding="utf-8"))
        except (OSError, UnicodeDecodeError) as e:
            result = Result.err(Error(ErrorType.PERMISSION_ERROR, f"{MANIFEST_FILE}: unreadable: {e}"))
        if result.is_ok() and result.value is not None:
            manifest = result.value
            report.warnings.extend(manifest.warnings)
        else:
            report.missing.append(MANIFEST_FILE)
            report.warnings.append(result.error.message if result.error else f"{MANIFEST_FILE}: invalid")

    front_matter: FrontMatterMeta | None = None
    skill_md = path / SKILL_MD_FILE
    if skill_md.is_file():
        try:
            front_matter = parse_front_matter(skill_md.read_text(encoding="utf-8"), report.warnings)
        except (OSError, UnicodeDecodeError) as e:
            report.warnings.append(f"{SKILL_MD_FILE}: unreadable: {e}")
        if front_matter and front_matter.name and front_matter.name != name:
            report.warnings.append(
                f"{SKILL_MD_FILE}: name {front_matter.name!r} differs from folder name {name!r}; using {name!r}"
            )

    binding: HandlerBinding | None = None
    entry = registry.get(name)
    if manifest is not None and manifest.command:
        binding = HandlerBinding.subprocess(manifest.command, streaming=bool(manifest.streaming))
    elif entry is not None:
        binding = HandlerBinding.in_process(name, entry.is_streaming)
        if manifest is not None and manifest.streaming is not None and manifest.streaming != entry.is_streaming:
            report.warnings.append(
                f"{MANIFEST_FILE}: skill.streaming = {str(manifest.streaming).lower()} ignored; "
                f"registered handler is {entry.kind}"
            )
    elif MANIFEST_FILE not in report.missing:
        report.missing.append(MISSING_BINDING)

    if not report.valid or models is None or binding is None:
        return report, None

    input_schema, output_schema = models
    sources: list[MetadataSource] = []
    if manifest is not None:
        sources.append(manifest.source)
    if front_matter is not None:
        sources.append(MetadataSource(
            origin=Origin.FRONT_MATTER, description=front_matter.description, tags=front_matter.tags
        ))
    if binding.registry_key is not None and entry is not None and entry.description is not None:
        sources.append(MetadataSource(origin=Origin.DOCSTRING, description=entry.description))
    sources.append(MetadataSource(origin=Origin.FOLDER_NAME, description=name))

    defaults = None
    defaults_path = path / DEFAULTS_FILE
    if defaults_path.is_file():
        data, problem = _read_json(defaults_path)
        if problem is None and isinstance(validate_payload(input_schema, data), ValidationErrors):
            problem = f"{DEFAULTS_FILE.as_posix()}: does not match the input schema"
        if problem is None:
            defaults = data
        else:
            report.warnings.append(f"{problem}; default dropped")

    examples = _load_examples(path, input_schema, report)
    return report, _FolderParts(
        name=name,
        input_schema=input_schema,
        output_schema=output_schema,
        binding=binding,
        sources=sources,
        defaults=defaults,
        examples=examples,
    )


def validate_folder(path: Path, registry: HandlerRegistry) -> FolderReport:
    """Check one skill folder. Never raises; problems land in the report."""
    report, _ = _inspect_folder(path, registry)
    return report


# =============================================================================
# Discovery
# =============================================================================


def skill_folders(skills_dir: Path) -> list[Path]:
    return sorted(
        (p for p in skills_dir.iterdir() if p.is_dir() and not p.name.startswith((".", "_"))),
        key=lambda p: (p.name.lower(), p.name),
    )


def scan(skills_dir: Path, registry: HandlerRegistry) -> DiscoveryResult:
    """
    Discover every valid skill folder directly under ``skills_dir``.

    Raises:
        StartupError: skills_dir is missing or two folders lowercase to one name
    """
    op_trace_id = str(uuid.uuid4())
    start_time = time.perf_counter()
    if not skills_dir.is_dir():
        raise StartupError(f"skills directory not found: {skills_dir}")

    schemas = SchemaRegistry()
    error_report = ErrorReport()
    skills: list[Skill] = []
    reports: list[FolderReport] = []
    seen: dict[str, Path] = {}

    for folder in skill_folders(skills_dir):
        report, parts = _inspect_folder(folder, registry)
        reports.append(report)
        for warning in report.warnings:
            error_report.add_warning(Error(ErrorType.VALIDATION_ERROR, warning, {"skill_path": str(folder)}))
        if parts is None:
            error_report.add_warning(Error(
                ErrorType.VALIDATION_ERROR,
                f"Skipping {folder.name}: missing {', '.join(report.missing)}",
                {"skill_path": str(folder)},
            ))
            continue
        if parts.name in seen:
            raise StartupError(f"duplicate skill name {parts.name!r}: {seen[parts.name]} and {folder}")
        try:
            skill = Skill(
                name=parts.name,
                meta=merge_metadata(parts.sources),
                input_schema=parts.input_schema,
                output_schema=parts.output_schema,
                binding=parts.binding,
                path=folder,
                defaults=parts.defaults,
                examples=parts.examples,
            )
        except ConfigurationError as e:
            report.missing.append("valid metadata")
            error_report.add_error(Error(ErrorType.VALIDATION_ERROR, str(e), {"skill_path": str(folder)}))
            continue
        schemas.register(skill.input_schema)
        schemas.register(skill.output_schema)
        seen[skill.name] = folder
        skills.append(skill)

    logger.info(
        "Skills discovered",
        operation="discover",
        status="partial" if error_report.has_errors() else "success",
        trace_id=op_trace_id,
        skills_dir=str(skills_dir),
        metrics={
            "folders": len(reports),
            "skills": len(skills),
            "skipped": len(reports) - len(skills),
            "duration_ms": int((time.perf_counter() - start_time) * 1000),
        },
    )
    error_report.log_summary(op_trace_id, operation="discover")
    return DiscoveryResult(skills=skills, reports=reports, schemas=schemas)


def discover(skills_dir: Path, registry: HandlerRegistry) -> list[Skill]:
    return scan(skills_dir, registry).skills


def discover_many(skills_dirs: list[Path] | tuple[Path, ...], registry: HandlerRegistry) -> DiscoveryResult:
    """
    Discover across several directories; one name may appear only once overall.

    Raises:
        StartupError: a directory is missing, or a skill name repeats (both paths named)
    """
    skills: list[Skill] = []
    reports: list[FolderReport] = []
    owners: dict[str, Path] = {}
    for skills_dir in skills_dirs:
        result = scan(Path(skills_dir), registry)
        for skill in result.skills:
            if skill.name in owners:
                raise StartupError(
                    f"duplicate skill name {skill.name!r}: {owners[skill.name]} and {skill.path}"
                )
            owners[skill.name] = skill.path or Path(skills_dir)
            skills.append(skill)
        reports.extend(result.reports)
    skills.sort(key=lambda s: s.name)

    schemas = SchemaRegistry()
    for skill in skills:
        schemas.register(skill.input_schema)
        schemas.register(skill.output_schema)
    return DiscoveryResult(skills=skills, reports=reports, schemas=schemas)
