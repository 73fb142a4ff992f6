"""The Skill record and the metadata priority chain.

A discovered Skill is immutable except for ``edit_binding``, which the edit
endpoint swaps as a single attribute assignment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum, StrEnum
from pathlib import Path
from typing import TYPE_CHECKING, Any

from skillserve.errors import ConfigurationError

if TYPE_CHECKING:
    from skillserve.schemas import SchemaDoc

SKILL_NAME_RE = re.compile(r"^[a-z0-9_-]+$")

DEFAULT_DESCRIPTION = ""
DEFAULT_IS_MCP = True
DEFAULT_TIMEOUT_SECS = 30.0


# =============================================================================
# Handler bindings
# =============================================================================


class BindingKind(StrEnum):
    IN_PROCESS_UNARY = "in_process_unary"
    IN_PROCESS_STREAMING = "in_process_streaming"
    SUBPROCESS = "subprocess"


@dataclass(frozen=True)
class HandlerBinding:
    """How a skill executes: a registry key, or a subprocess command."""

    kind: BindingKind
    registry_key: str | None = None
    command: tuple[str, ...] | None = None
    # Subprocess only: manifest ``streaming = true`` switches stdout to NDJSON
    streaming_output: bool = False

    def __post_init__(self) -> None:
        if self.kind is BindingKind.SUBPROCESS:
            if not self.command or self.registry_key is not None:
                raise ConfigurationError("subprocess binding needs a command and no registry key")
        else:
            if not self.registry_key or self.command is not None:
                raise ConfigurationError("in-process binding needs a registry key and no command")
            if self.streaming_output:
                raise ConfigurationError("streaming_output only applies to subprocess bindings")

    @classmethod
    def in_process(cls, registry_key: str, streaming: bool) -> HandlerBinding:
        kind = BindingKind.IN_PROCESS_STREAMING if streaming else BindingKind.IN_PROCESS_UNARY
        return cls(kind=kind, registry_key=registry_key)

    @classmethod
    def subprocess(cls, command: list[str] | tuple[str, ...], streaming: bool = False) -> HandlerBinding:
        return cls(kind=BindingKind.SUBPROCESS, command=tuple(command), streaming_output=streaming)

    @property
    def is_streaming(self) -> bool:
        if self.kind is BindingKind.SUBPROCESS:
            return self.streaming_output
        return self.kind is BindingKind.IN_PROCESS_STREAMING

    def describe(self) -> str:
        if self.kind is BindingKind.SUBPROCESS:
            return "subprocess: " + " ".join(self.command or ())
        return f"{self.kind.value}: {self.registry_key}"


# =============================================================================
# Metadata
# =============================================================================


class Origin(Enum):
    TOML = "toml"
    FRONT_MATTER = "front_matter"
    DOCSTRING = "docstring"
    FOLDER_NAME = "folder_name"

    @property
    def rank(self) -> int:
        """1 is the most explicit source and always wins."""
        return _ORIGIN_RANK[self]


_ORIGIN_RANK = {
    Origin.TOML: 1,
    Origin.FRONT_MATTER: 2,
    Origin.DOCSTRING: 3,
    Origin.FOLDER_NAME: 4,
}


@dataclass(frozen=True)
class MetadataSource:
    origin: Origin
    description: str | None = None
    tags: list[str] | None = None
    is_mcp: bool | None = None
    timeout_secs: float | None = None


@dataclass(frozen=True)
class SkillMetadata:
    description: str = DEFAULT_DESCRIPTION
    tags: list[str] = field(default_factory=list)
    is_mcp: bool = DEFAULT_IS_MCP
    timeout_secs: float = DEFAULT_TIMEOUT_SECS

    def __post_init__(self) -> None:
        if isinstance(self.timeout_secs, bool) or not self.timeout_secs > 0:
            raise ConfigurationError(f"timeout_secs must be positive, got {self.timeout_secs!r}")
        for tag in self.tags:
            if not isinstance(tag, str) or not tag:
                raise ConfigurationError(f"tags must be non-empty strings, got {tag!r}")

    def as_source(self, origin: Origin = Origin.TOML) -> MetadataSource:
        return MetadataSource(
            origin=origin,
            description=self.description,
            tags=list(self.tags),
            is_mcp=self.is_mcp,
            timeout_secs=self.timeout_secs,
        )


_MERGED_FIELDS = ("description", "tags", "is_mcp", "timeout_secs")


def merge_metadata(sources: list[MetadataSource]) -> SkillMetadata:
    """
    Merge metadata sources, field by field, lowest rank winning.

    Args:
        sources: At most one source per origin

    Returns:
        SkillMetadata with unset fields at their defaults

    Raises:
        ConfigurationError: empty source list or a repeated origin
    """
    if not sources:
        raise ConfigurationError("merge_metadata needs at least one source")
    seen: set[Origin] = set()
    for source in sources:
        if source.origin in seen:
            raise ConfigurationError(f"duplicate metadata origin: {source.origin.value}")
        seen.add(source.origin)

    merged: dict[str, Any] = {}
    for source in sorted(sources, key=lambda s: s.origin.rank):
        for name in _MERGED_FIELDS:
            value = getattr(source, name)
            if value is not None and name not in merged:
                merged[name] = list(value) if name == "tags" else value
    return SkillMetadata(**merged)


# =============================================================================
# Skill
# =============================================================================


@dataclass(frozen=True)
class Example:
    input: Any
    output: Any
    source_file: Path


@dataclass(eq=False)
class Skill:
    name: str
    meta: SkillMetadata
    input_schema: SchemaDoc
    output_schema: SchemaDoc
    binding: HandlerBinding
    path: Path | None = None
    defaults: Any = None
    examples: list[Example] = field(default_factory=list)
    edit_binding: HandlerBinding | None = None

    def __post_init__(self) -> None:
        if not SKILL_NAME_RE.match(self.name):
            raise ConfigurationError(f"skill name must match [a-z0-9_-]+, got {self.name!r}")
        if self.edit_binding is not None and self.edit_binding.is_streaming != self.binding.is_streaming:
            raise ConfigurationError("edit binding must have the same streaming kind as the binding")

    @property
    def streaming(self) -> bool:
        return is_streaming(self)


def effective_binding(skill: Skill) -> HandlerBinding:
    """Return the hot-swapped binding when one is installed, else the discovered one."""
    # Single attribute read; a concurrent swap is observed whole or not at all
    edit = skill.edit_binding
    return edit if edit is not None else skill.binding


def is_streaming(skill: Skill) -> bool:
    return skill.binding.is_streaming
