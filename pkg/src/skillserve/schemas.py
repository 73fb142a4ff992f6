"""JSON Schema documents, request validation, canonical bytes, tool descriptors.

Every transport reads a skill's ``SchemaDoc.resolved`` form: local ``$ref``s are
inlined once at load time, so the OpenAPI request body and the MCP inputSchema
are the same object.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Literal

from jsonschema import Draft202012Validator, validators
from jsonschema.exceptions import SchemaError

from skillserve.errors import ConfigurationError, ContractViolation

if TYPE_CHECKING:
    from skillserve.skill import Skill

SchemaRole = Literal["input", "output"]

# Combinators over scalars are fine; over objects/arrays they are not supported
_COMBINATORS = ("anyOf", "oneOf", "allOf")
_COMPLEX_TYPES = {"object", "array"}


# =============================================================================
# $ref inlining and subset checks
# =============================================================================


def _resolve_pointer(root: dict, ref: str) -> Any:
    node: Any = root
    for part in ref[2:].split("/") if ref != "#" else []:
        part = part.replace("~1", "/").replace("~0", "~")
        if isinstance(node, dict) and part in node:
            node = node[part]
        elif isinstance(node, list) and part.isdigit() and int(part) < len(node):
            node = node[int(part)]
        else:
            raise ConfigurationError(f"unresolvable $ref {ref!r}")
    return node


def inline_refs(schema: dict) -> dict:
    """
    Return a copy of ``schema`` with every local ``$ref`` replaced by its target.

    Raises:
        ConfigurationError: remote or recursive references
    """

    def walk(node: Any, stack: tuple[str, ...]) -> Any:
        if isinstance(node, list):
            return [walk(item, stack) for item in node]
        if not isinstance(node, dict):
            return node
        if "$ref" in node:
            ref = node["$ref"]
            if not isinstance(ref, str) or not ref.startswith("#"):
                raise ConfigurationError(f"remote $ref is not supported: {ref!r}")
            if ref in stack:
                raise ConfigurationError(f"recursive $ref is not supported: {ref!r}")
            target = walk(_resolve_pointer(schema, ref), stack + (ref,))
            siblings = {k: walk(v, stack) for k, v in node.items() if k != "$ref"}
            if not isinstance(target, dict):
                raise ConfigurationError(f"$ref {ref!r} does not point at a schema object")
            return {**target, **siblings}
        return {k: walk(v, stack) for k, v in node.items()}

    resolved = walk(schema, ())
    resolved.pop("$defs", None)
    resolved.pop("definitions", None)
    return resolved


def _is_complex(branch: Any) -> bool:
    if not isinstance(branch, dict):
        return False
    declared = branch.get("type")
    types = set(declared) if isinstance(declared, list) else {declared}
    return bool(types & _COMPLEX_TYPES) or "properties" in branch or "items" in branch


def check_supported_subset(schema: dict, where: str = "#") -> None:
    """Reject unions whose branches are objects or arrays."""
    if isinstance(schema, list):
        for i, item in enumerate(schema):
            check_supported_subset(item, f"{where}/{i}")
        return
    if not isinstance(schema, dict):
        return
    for keyword in _COMBINATORS:
        branches = schema.get(keyword)
        if isinstance(branches, list) and any(_is_complex(b) for b in branches):
            raise ConfigurationError(
                f"{where}: {keyword} over object or array schemas is not supported"
            )
    for key, value in schema.items():
        if isinstance(value, (dict, list)):
            check_supported_subset(value, f"{where}/{key}")


@dataclass(frozen=True)
class SchemaDoc:
    raw: dict
    skill_name: str
    role: SchemaRole
    resolved: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not isinstance(self.raw, dict):
            raise ConfigurationError(f"{self.skill_name}: {self.role} schema must be a JSON object")
        if self.raw.get("type") != "object":
            raise ConfigurationError(f"{self.skill_name}: {self.role} schema must have \"type\": \"object\"")
        try:
            Draft202012Validator.check_schema(self.raw)
        except SchemaError as e:
            raise ConfigurationError(f"{self.skill_name}: invalid {self.role} schema: {e.message}") from e
        resolved = inline_refs(self.raw)
        check_supported_subset(resolved)
        object.__setattr__(self, "resolved", resolved)

    @property
    def title(self) -> str | None:
        title = self.raw.get("title")
        return title if isinstance(title, str) and title else None

    @property
    def key(self) -> str:
        """Registry key, namespaced by skill: ``summarize/Input``."""
        return f"{self.skill_name}/{self.title or self.role}"

    @property
    def component_name(self) -> str:
        # OpenAPI component names allow only [A-Za-z0-9._-]
        label = re.sub(r"[^A-Za-z0-9._-]", "_", self.title or self.role.capitalize())
        return f"{self.skill_name}.{label}"


class SchemaRegistry:
    """Schema documents keyed per skill so equal titles never collide."""

    def __init__(self) -> None:
        self._docs: dict[str, SchemaDoc] = {}

    def register(self, doc: SchemaDoc) -> str:
        key = doc.key
        if key in self._docs:
            # input and output share a title inside one skill
            key = f"{doc.skill_name}/{doc.role}"
        if key in self._docs:
            raise ConfigurationError(f"schema key already registered: {key}")
        self._docs[key] = doc
        return key

    def get(self, key: str) -> SchemaDoc | None:
        return self._docs.get(key)

    def keys(self) -> list[str]:
        return sorted(self._docs)

    def __len__(self) -> int:
        return len(self._docs)


# =============================================================================
# Validation
# =============================================================================


def _extend_with_default(validator_class):
    validate_properties = validator_class.VALIDATORS["properties"]

    def set_defaults(validator, properties, instance, schema):
        if validator.is_type(instance, "object"):
            for prop, subschema in properties.items():
                if isinstance(subschema, dict) and "default" in subschema:
                    instance.setdefault(prop, copy.deepcopy(subschema["default"]))
        yield from validate_properties(validator, properties, instance, schema)

    return validators.extend(validator_class, {"properties": set_defaults})


DefaultFillingValidator = _extend_with_default(Draft202012Validator)


@dataclass
class ValidationErrors:
    """FastAPI-shaped error list: ``{"detail": [{loc, msg, type}, ...]}``."""

    detail: list[dict]

    def to_dict(self) -> dict:
        return {"detail": self.detail}

    def as_text(self) -> str:
        return "; ".join(
            f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in self.detail
        )


def _collect_errors(schema: dict, instance: Any, validator_class) -> list[dict]:
    validator = validator_class(schema)
    detail: list[dict] = []
    seen: set[str] = set()
    for error in validator.iter_errors(instance):
        loc = list(error.absolute_path)
        if error.validator == "required" and isinstance(error.instance, dict):
            for prop in error.validator_value:
                if prop in error.instance:
                    continue
                entry = {"loc": loc + [prop], "msg": "Field required", "type": "missing"}
                marker = json.dumps(entry, sort_keys=True)
                if marker not in seen:
                    seen.add(marker)
                    detail.append(entry)
            continue
        entry = {"loc": loc, "msg": error.message, "type": str(error.validator)}
        marker = json.dumps(entry, sort_keys=True, default=str)
        if marker not in seen:
            seen.add(marker)
            detail.append(entry)
    detail.sort(key=lambda e: (json.dumps(e["loc"]), e["type"], e["msg"]))
    return detail


def validate_payload(schema: SchemaDoc, body: Any) -> dict | ValidationErrors:
    instance = copy.deepcopy(body)
    detail = _collect_errors(schema.resolved, instance, DefaultFillingValidator)
    if detail:
        return ValidationErrors(detail)
    return instance


def validate_input(skill: Skill, body: Any) -> dict | ValidationErrors:
    """
    Validate a parsed request body against the skill's input schema.

    Args:
        skill: Target skill
        body: Parsed JSON value

    Returns:
        The validated object with schema defaults filled in, or ValidationErrors
        listing every violation
    """
    return validate_payload(skill.input_schema, body)


def validate_output(skill: Skill, output: Any) -> ValidationErrors | None:
    """Check a handler's output against the output schema; defaults are not applied."""
    detail = _collect_errors(skill.output_schema.resolved, output, Draft202012Validator)
    return ValidationErrors(detail) if detail else None


# =============================================================================
# Canonical form + tool descriptors
# =============================================================================


def canonicalize(schema: Any) -> bytes:
    """Sorted keys at every depth, no whitespace, UTF-8."""
    return json.dumps(
        schema,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    ).encode("utf-8")


def _reject_constant(name: str) -> Any:
    raise ValueError(f"{name} is not valid JSON")


def loads_strict(raw: bytes | str) -> Any:
    """json.loads without the NaN / Infinity extensions."""
    return json.loads(raw, parse_constant=_reject_constant)


def canonical_text(value: Any) -> str:
    return canonicalize(value).decode("utf-8")


def transport_schema(skill: Skill) -> dict:
    """The input schema object both transports publish."""
    return json.loads(canonicalize(skill.input_schema.resolved))


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    input_schema: dict

    def to_dict(self) -> dict:
        return {"name": self.name, "description": self.description, "inputSchema": self.input_schema}


def tool_descriptor(skill: Skill) -> ToolDescriptor:
    if not skill.meta.is_mcp:
        raise ContractViolation(f"skill {skill.name!r} is hidden from MCP (is_mcp = false)")
    return ToolDescriptor(
        name=skill.name,
        description=skill.meta.description,
        input_schema=transport_schema(skill),
    )
