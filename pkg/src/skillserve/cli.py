"""skillserve command line: init, validate, list, test, serve.

Exit codes: 0 success, 1 validation/test failures, 2 usage or environment errors.
"""

from __future__ import annotations

import asyncio
import json
from collections.abc import Callable
from pathlib import Path
from typing import Any, NoReturn

import click
import uvicorn
from click.core import ParameterSource
from tabulate import tabulate

from skillserve import __version__
from skillserve.app import create_app, enforce_loopback, skill_summary
from skillserve.config_loader import CONFIG_FILENAME, ServerConfig, build_server_config, load_config_file
from skillserve.discovery import discover_many, skill_folders, validate_folder
from skillserve.errors import SkillServeError
from skillserve.logging_config import setup_logger
from skillserve.registry import HandlerRegistry, load_registry
from skillserve.runtime import ExampleResult, run_examples
from skillserve.scaffold import init_project, init_skills_dir, normalize_skill
from skillserve.skill import Skill

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_USAGE = 2


def _fail(ctx: click.Context, message: str, code: int = EXIT_USAGE) -> NoReturn:
    click.echo(f"Error: {message}", err=True)
    ctx.exit(code)


def _emit_json(payload: Any) -> None:
    click.echo(json.dumps(payload, indent=2, ensure_ascii=False))


def _explicit(ctx: click.Context, **params: Any) -> dict[str, Any]:
    """Keep only parameters set on the command line or through the environment."""
    overrides: dict[str, Any] = {}
    for name, value in params.items():
        source = ctx.get_parameter_source(name)
        if source in (ParameterSource.COMMANDLINE, ParameterSource.ENVIRONMENT):
            overrides[name] = value
    return overrides


def _resolve_config(ctx: click.Context, config_path: Path | None, overrides: dict[str, Any]) -> ServerConfig:
    if config_path is None and Path(CONFIG_FILENAME).is_file():
        config_path = Path(CONFIG_FILENAME)
    try:
        file_config = load_config_file(config_path).unwrap() if config_path is not None else None
        return build_server_config(file_config, overrides)
    except SkillServeError as e:
        _fail(ctx, str(e))


def _load_registry(ctx: click.Context, config: ServerConfig) -> HandlerRegistry:
    try:
        return load_registry(config.handlers)
    except SkillServeError as e:
        _fail(ctx, str(e))


def project_options(fn: Callable[..., Any]) -> Callable[..., Any]:
    """--skills-dir / --config / --handlers, shared by every command that reads skills."""
    fn = click.option(
        "--handlers",
        envvar="SKILLSERVE_HANDLERS",
        help="Handler registry as module:attribute",
    )(fn)
    fn = click.option(
        "--config",
        "config_path",
        type=click.Path(path_type=Path, dir_okay=False),
        help=f"Config file (default: ./{CONFIG_FILENAME} when present)",
    )(fn)
    fn = click.option(
        "--skills-dir",
        "skills_dir",
        multiple=True,
        envvar="SKILLS_DIR",
        type=click.Path(path_type=Path, file_okay=False),
        help="Skills directory; repeat for several",
    )(fn)
    return fn


def _project_config(
    ctx: click.Context,
    skills_dir: tuple[Path, ...],
    config_path: Path | None,
    handlers: str | None,
) -> ServerConfig:
    overrides = _explicit(ctx, skills_dir=skills_dir, handlers=handlers)
    return _resolve_config(ctx, config_path, overrides)


def _require_dirs(ctx: click.Context, config: ServerConfig) -> None:
    for skills_dir in config.skills_dirs:
        if not skills_dir.is_dir():
            _fail(ctx, f"skills directory not found: {skills_dir}")


def _discover(ctx: click.Context, config: ServerConfig, registry: HandlerRegistry) -> list[Skill]:
    _require_dirs(ctx, config)
    try:
        return discover_many(config.skills_dirs, registry).skills
    except SkillServeError as e:
        _fail(ctx, str(e))


def _yes_no(flag: bool) -> str:
    return "yes" if flag else "no"


# =============================================================================
# Group
# =============================================================================


@click.group()
@click.version_option(__version__, prog_name="skillserve")
@click.option(
    "--log-level",
    default="WARNING",
    envvar="SKILLSERVE_LOG_LEVEL",
    show_default=True,
    type=click.Choice(["TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"], case_sensitive=False),
    help="Log level for the JSONL log on stderr",
)
@click.pass_context
def main(ctx: click.Context, log_level: str) -> None:
    """Serve skill folders over HTTP (SSE/JSON), OpenAPI and MCP from one process."""
    ctx.ensure_object(dict)
    ctx.obj["log_level"] = log_level.upper()
    setup_logger(ctx.obj["log_level"], log_to_file=False)


# =============================================================================
# init
# =============================================================================


@main.command()
@click.argument("path", type=click.Path(path_type=Path, file_okay=False), default=".")
@click.option("--skill", "skill_src", type=click.Path(path_type=Path), help="Import one external skill folder")
@click.option("--skills-dir", "skills_src", type=click.Path(path_type=Path), help="Import every subfolder of a directory")
@click.option("--output", default="skills", show_default=True, help="Skills folder (inside PATH) for imports")
@click.option("--force", is_flag=True, help="Write into a non-empty target / replace existing skill folders")
@click.pass_context
def init(
    ctx: click.Context,
    path: Path,
    skill_src: Path | None,
    skills_src: Path | None,
    output: str,
    force: bool,
) -> None:
    """Create a project, or import skill folders into one."""
    if skill_src is not None and skills_src is not None:
        raise click.UsageError("--skill and --skills-dir are mutually exclusive")

    try:
        if skill_src is None and skills_src is None:
            created = init_project(path, force=force)
            click.echo(f"Initialized skillserve project in {path}")
            for rel in created:
                click.echo(f"  {rel.as_posix()}")
            return

        target = path / output
        if skill_src is not None:
            imported = [normalize_skill(skill_src, target, force=force)]
        else:
            assert skills_src is not None
            imported = init_skills_dir(skills_src, target, force=force)
    except (SkillServeError, OSError) as e:
        _fail(ctx, str(e))

    for item in imported:
        click.echo(f"imported {item.name} -> {item.path}")
        for note in item.notes:
            click.echo(f"  {note}")
    click.echo(f"{len(imported)} skill(s) imported")


# =============================================================================
# validate / list / test
# =============================================================================


@main.command()
@project_options
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output")
@click.pass_context
def validate(
    ctx: click.Context,
    skills_dir: tuple[Path, ...],
    config_path: Path | None,
    handlers: str | None,
    as_json: bool,
) -> None:
    """Check every skill folder and report what is missing."""
    config = _project_config(ctx, skills_dir, config_path, handlers)
    registry = _load_registry(ctx, config)
    _require_dirs(ctx, config)

    reports = [validate_folder(folder, registry) for d in config.skills_dirs for folder in skill_folders(d)]
    all_valid = all(r.valid for r in reports)

    if as_json:
        _emit_json({"valid": all_valid, "reports": [r.to_dict() for r in reports]})
    else:
        rows = [[r.name, "ok" if r.valid else "INVALID", ", ".join(r.missing) or "-"] for r in reports]
        click.echo(tabulate(rows, headers=["SKILL", "STATUS", "MISSING"], tablefmt="plain"))
        for r in reports:
            for warning in r.warnings:
                click.echo(f"  {r.name}: {warning}")
        click.echo(f"{sum(r.valid for r in reports)}/{len(reports)} valid")
    ctx.exit(EXIT_OK if all_valid else EXIT_FAILURES)


@main.command(name="list")
@project_options
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output")
@click.pass_context
def list_command(
    ctx: click.Context,
    skills_dir: tuple[Path, ...],
    config_path: Path | None,
    handlers: str | None,
    as_json: bool,
) -> None:
    """List discovered skills."""
    config = _project_config(ctx, skills_dir, config_path, handlers)
    skills = _discover(ctx, config, _load_registry(ctx, config))

    if as_json:
        _emit_json([skill_summary(s) for s in skills])
        return
    if skills:
        rows = [[s.name, _yes_no(s.streaming), _yes_no(s.meta.is_mcp), s.meta.description] for s in skills]
        click.echo(tabulate(rows, headers=["NAME", "STREAMING", "MCP", "DESCRIPTION"], tablefmt="plain"))
    click.echo(f"{len(skills)} skills")


async def _run_all(skills: list[Skill], registry: HandlerRegistry) -> dict[str, list[ExampleResult]]:
    return {skill.name: await run_examples(skill, registry) for skill in skills if skill.examples}


@main.command()
@project_options
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output")
@click.pass_context
def test(
    ctx: click.Context,
    skills_dir: tuple[Path, ...],
    config_path: Path | None,
    handlers: str | None,
    as_json: bool,
) -> None:
    """Run every skill's examples/*.json through its handler."""
    config = _project_config(ctx, skills_dir, config_path, handlers)
    registry = _load_registry(ctx, config)
    skills = _discover(ctx, config, registry)

    results = asyncio.run(_run_all(skills, registry))
    skipped = [s.name for s in skills if not s.examples]
    failed = sum(not r.passed for rs in results.values() for r in rs)
    total = sum(len(rs) for rs in results.values())

    if as_json:
        _emit_json({
            "passed": failed == 0,
            "results": [
                {"skill": name, "file": r.source_file.name, "passed": r.passed, "diff": r.diff}
                for name, rs in results.items()
                for r in rs
            ],
            "skipped": skipped,
        })
    else:
        for name, rs in results.items():
            for r in rs:
                click.echo(f"{'PASS' if r.passed else 'FAIL'} {name} {r.source_file.name}")
                if not r.passed:
                    for line in r.diff.splitlines():
                        click.echo(f"    {line}")
        for name in skipped:
            click.echo(f"SKIP {name} (no examples)")
        click.echo(f"{total - failed}/{total} examples passed")
    ctx.exit(EXIT_OK if failed == 0 else EXIT_FAILURES)


# =============================================================================
# serve
# =============================================================================


@main.command()
@click.option("--host", envvar="HOST", default="127.0.0.1", show_default=True)
@click.option("--port", envvar="PORT", type=int, default=8000, show_default=True)
@project_options
@click.option("--mcp-path", envvar="MCP_PATH", default="/mcp", show_default=True)
@click.option(
    "--enable-edit-endpoints",
    "enable_edit_endpoints",
    is_flag=True,
    envvar="ENABLE_EDIT_ENDPOINTS",
    help="Expose POST/DELETE /skills/{name}/edit (loopback hosts only)",
)
@click.pass_context
def serve(
    ctx: click.Context,
    host: str,
    port: int,
    skills_dir: tuple[Path, ...],
    config_path: Path | None,
    handlers: str | None,
    mcp_path: str,
    enable_edit_endpoints: bool,
) -> None:
    """Discover skills and serve HTTP + MCP on one listener."""
    overrides = _explicit(
        ctx,
        host=host,
        port=port,
        skills_dir=skills_dir,
        handlers=handlers,
        mcp_path=mcp_path,
        enable_edit_endpoints=enable_edit_endpoints,
    )
    config = _resolve_config(ctx, config_path, overrides)
    try:
        enforce_loopback(config)
    except SkillServeError as e:
        _fail(ctx, str(e))

    setup_logger(ctx.obj["log_level"] if ctx.obj else "INFO", log_to_file=True)
    try:
        app = create_app(config)
    except SkillServeError as e:
        _fail(ctx, str(e))

    uvicorn.run(app, host=config.host, port=config.port, log_config=None)
