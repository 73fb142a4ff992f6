"""Folder validation, manifests, front-matter and directory discovery."""

from __future__ import annotations

import shutil

import frontmatter
import pytest

from skillserve.discovery import (
    MISSING_BINDING,
    discover,
    discover_many,
    parse_front_matter,
    parse_skill_toml,
    scan,
    validate_folder,
)
from skillserve.errors import ErrorType, StartupError
from skillserve.scaffold import SAMPLE_SKILLS_DIR
from skillserve.skill import BindingKind, Origin
from tests.conftest import ECHO_MODELS, SAMPLE_NAMES, write_skill

SUMMARIZE_TOML = """\
[skill]
description  = "Summarise text to a target length"
is_mcp       = true
tags         = ["text", "nlp"]
timeout_secs = 30
"""


# =============================================================================
# skill.toml
# =============================================================================


def test_parse_manifest():
    manifest = parse_skill_toml(SUMMARIZE_TOML).unwrap()
    assert manifest.source.origin is Origin.TOML
    assert manifest.source.description == "Summarise text to a target length"
    assert manifest.source.is_mcp is True
    assert manifest.source.tags == ["text", "nlp"]
    assert manifest.source.timeout_secs == 30
    assert manifest.command is None
    assert manifest.warnings == []


def test_parse_empty_manifest():
    source = parse_skill_toml("").unwrap().source
    assert (source.description, source.tags, source.is_mcp, source.timeout_secs) == (None, None, None, None)


def test_parse_is_mcp_only():
    source = parse_skill_toml("[skill]\nis_mcp = false\n").unwrap().source
    assert source.is_mcp is False
    assert source.description is None
    assert source.timeout_secs is None


def test_parse_handler_extensions_and_unknown_keys():
    manifest = parse_skill_toml(
        '[skill]\nstreaming = true\ncolour = "red"\n[handler]\ncommand = ["python3", "run.py"]\n[extra]\n'
    ).unwrap()
    assert manifest.streaming is True
    assert manifest.command == ("python3", "run.py")
    assert any("skill.colour" in w for w in manifest.warnings)
    assert any("'extra'" in w for w in manifest.warnings)


def test_parse_syntax_error_reports_position():
    result = parse_skill_toml('[skill]\ndescription = "Summ')
    assert result.is_err()
    assert result.error.error_type is ErrorType.PARSE_ERROR
    assert result.error.context["line_number"] == 2
    assert "line 2" in result.error.message


@pytest.mark.parametrize(
    "text",
    [
        '[skill]\ndescription = 3\n',
        '[skill]\ntimeout_secs = 0\n',
        '[skill]\ntags = "text"\n',
        '[handler]\ncommand = []\n',
    ],
)
def test_parse_type_errors(text):
    result = parse_skill_toml(text)
    assert result.is_err()
    assert result.error.error_type is ErrorType.VALIDATION_ERROR


# =============================================================================
# SKILL.md front-matter
# =============================================================================


def test_front_matter_scalars():
    meta = parse_front_matter("---\nname: summarize\ndescription: Summarise text\n---\n# Body")
    assert meta is not None
    assert meta.name == "summarize"
    assert meta.description == "Summarise text"
    assert meta.tags is None


def test_front_matter_absent():
    assert parse_front_matter("# Just a heading\n\nname: not-front-matter\n") is None


def test_front_matter_inline_and_dash_tags():
    assert parse_front_matter("---\ntags: [text, nlp]\n---\n").tags == ["text", "nlp"]
    assert parse_front_matter("---\ntags:\n  - text\n  - 'nlp'\n---\n").tags == ["text", "nlp"]


def test_front_matter_block_scalar_and_other_keys():
    meta = parse_front_matter(
        "---\nname: x\nmetadata:\n  author: someone\n  nested: [1, 2]\n"
        "description: >\n  folded over\n  two lines\nlicense: MIT\n---\nbody\n"
    )
    assert meta.description == "folded over two lines"
    assert meta.name == "x"


def test_front_matter_unclosed_fence_warns():
    warnings: list[str] = []
    assert parse_front_matter("---\nname: x\ndescription: y\n", warnings) is None
    assert warnings and "not closed" in warnings[0]


def test_front_matter_agrees_with_full_parser():
    corpus = [p for p in SAMPLE_SKILLS_DIR.glob("*/SKILL.md")]
    corpus_texts = [p.read_text() for p in corpus] + [
        "---\nname: a\ndescription: 'quoted: colon'\ntags: [x, y]\n---\n",
        '---\nname: b\ndescription: "double \\"quoted\\""\ntags:\n  - one\n  - two\n---\nbody\n',
        "---\nname: c\ndescription: |\n  literal\n  block\n---\n",
    ]
    assert len(corpus) >= 3
    for text in corpus_texts:
        ours = parse_front_matter(text)
        reference = frontmatter.loads(text).metadata
        assert ours is not None
        assert ours.name == reference.get("name")
        assert ours.description == (reference.get("description") or "").rstrip("\n")
        assert ours.tags == reference.get("tags")


# =============================================================================
# validate_folder
# =============================================================================


def test_valid_folder(tmp_path, registry):
    folder = write_skill(tmp_path, "echo", ECHO_MODELS)
    report = validate_folder(folder, registry)
    assert report.valid
    assert report.missing == []


def test_missing_binding(tmp_path, registry):
    report = validate_folder(write_skill(tmp_path, "unbound", ECHO_MODELS), registry)
    assert not report.valid
    assert report.missing == [MISSING_BINDING]


def test_missing_models(tmp_path, registry):
    report = validate_folder(write_skill(tmp_path, "summarize"), registry)
    assert report.missing == ["models.json"]


def test_malformed_toml_names_the_line(tmp_path, registry):
    folder = write_skill(tmp_path, "echo", ECHO_MODELS, toml='[skill]\nis_mcp = true\ndescription = "trunc')
    report = validate_folder(folder, registry)
    assert not report.valid
    assert "skill.toml" in report.missing
    assert any("line 3" in w for w in report.warnings)


def test_command_binding_without_registry_entry(tmp_path, registry):
    folder = write_skill(tmp_path, "piped", ECHO_MODELS, toml='[handler]\ncommand = ["cat"]\n')
    assert validate_folder(folder, registry).valid


def test_invalid_schema_is_reported(tmp_path, registry):
    folder = write_skill(tmp_path, "echo", {"input": {"type": "array"}, "output": {"type": "object"}})
    report = validate_folder(folder, registry)
    assert report.missing == ["models.json"]
    assert any("type" in w for w in report.warnings)


# =============================================================================
# discover
# =============================================================================


def test_discover_two_folders_with_equal_titles(tmp_path, registry):
    for name in ("summarize", "translate"):
        shutil.copytree(SAMPLE_SKILLS_DIR / name, tmp_path / name)
    result = scan(tmp_path, registry)
    assert [s.name for s in result.skills] == ["summarize", "translate"]
    assert "summarize/Input" in result.schemas.keys()
    assert "translate/Input" in result.schemas.keys()


def test_discover_sample_corpus(registry):
    skills = discover(SAMPLE_SKILLS_DIR, registry)
    assert [s.name for s in skills] == SAMPLE_NAMES
    by_name = {s.name: s for s in skills}
    assert by_name["summarize"].meta.description == "Summarise text to a target length"
    assert by_name["summarize"].meta.timeout_secs == 30
    assert by_name["greet"].meta.is_mcp is False
    assert by_name["vectornorm"].meta.tags == ["math", "demo"]
    assert by_name["classify"].meta.description == "Label text with every matching category."
    assert by_name["translate"].meta.description == "translate"
    assert by_name["echo"].defaults == {"text": "hello"}
    assert len(by_name["echo"].examples) == 1


def test_skips_invalid_folders(tmp_path, registry):
    write_skill(tmp_path, "echo", ECHO_MODELS)
    write_skill(tmp_path, "summarize")
    write_skill(tmp_path, "orphan", ECHO_MODELS)
    (tmp_path / ".hidden").mkdir()
    result = scan(tmp_path, registry)
    assert [s.name for s in result.skills] == ["echo"]
    assert len(result.reports) == 3
    assert sum(not r.valid for r in result.reports) == 2


def test_discover_is_deterministic(skills_dir, registry):
    first = [(s.name, s.meta, s.binding) for s in discover(skills_dir, registry)]
    second = [(s.name, s.meta, s.binding) for s in discover(skills_dir, registry)]
    assert first == second


def test_mixed_case_folders_come_back_sorted_by_skill_name(tmp_path, registry):
    for folder in ("Zeta", "alpha", "Mid"):
        write_skill(tmp_path, folder, ECHO_MODELS, toml='[handler]\ncommand = ["cat"]\n')
    assert [s.name for s in discover(tmp_path, registry)] == ["alpha", "mid", "zeta"]


def test_missing_dir_is_startup_error(tmp_path, registry):
    with pytest.raises(StartupError):
        discover(tmp_path / "nope", registry)


def test_duplicate_across_dirs_names_both_paths(tmp_path, registry):
    first = write_skill(tmp_path / "a", "echo", ECHO_MODELS)
    second = write_skill(tmp_path / "b", "echo", ECHO_MODELS)
    with pytest.raises(StartupError) as exc_info:
        discover_many([tmp_path / "a", tmp_path / "b"], registry)
    assert str(first) in str(exc_info.value)
    assert str(second) in str(exc_info.value)


def test_discover_many_merges_sorted(tmp_path, registry):
    write_skill(tmp_path / "a", "greet", {"input": {"type": "object"}, "output": {"type": "object"}})
    write_skill(tmp_path / "b", "echo", ECHO_MODELS)
    result = discover_many([tmp_path / "a", tmp_path / "b"], registry)
    assert [s.name for s in result.skills] == ["echo", "greet"]


def test_priority_chain_per_rank(tmp_path, registry):
    write_skill(tmp_path, "summarize", ECHO_MODELS, toml='[skill]\ndescription = "toml"\n',
                skill_md="---\ndescription: front\n---\n")
    write_skill(tmp_path, "vectornorm", ECHO_MODELS, skill_md="---\ndescription: front\n---\n")
    write_skill(tmp_path, "classify", ECHO_MODELS)
    write_skill(tmp_path, "translate", ECHO_MODELS)
    by_name = {s.name: s for s in discover(tmp_path, registry)}
    assert by_name["summarize"].meta.description == "toml"
    assert by_name["vectornorm"].meta.description == "front"
    assert by_name["classify"].meta.description == "Label text with every matching category."
    assert by_name["translate"].meta.description == "translate"


def test_subprocess_streaming_flag(tmp_path, registry):
    write_skill(tmp_path, "lines", ECHO_MODELS, toml='[skill]\nstreaming = true\n[handler]\ncommand = ["cat"]\n')
    (skill,) = discover(tmp_path, registry)
    assert skill.binding.kind is BindingKind.SUBPROCESS
    assert skill.streaming is True


def test_bad_defaults_and_examples_are_dropped(tmp_path, registry):
    write_skill(
        tmp_path,
        "echo",
        ECHO_MODELS,
        files={
            "defaults/input.json": {"text": 5},
            "examples/01.json": {"input": {"text": "a"}, "output": {"text": "a"}},
            "examples/02.json": {"input": {"nope": 1}, "output": {}},
            "examples/03.json": "not json",
        },
    )
    result = scan(tmp_path, registry)
    (skill,) = result.skills
    assert skill.defaults is None
    assert [e.source_file.name for e in skill.examples] == ["01.json"]
    warnings = result.reports[0].warnings
    assert any("default dropped" in w for w in warnings)
    assert sum("example skipped" in w for w in warnings) == 2


def test_front_matter_name_mismatch_warns(tmp_path, registry):
    folder = write_skill(tmp_path, "echo", ECHO_MODELS, skill_md="---\nname: other\n---\n")
    report = validate_folder(folder, registry)
    assert report.valid
    assert any("differs from folder name" in w for w in report.warnings)


def test_streaming_flag_mismatch_warns(tmp_path, registry):
    folder = write_skill(tmp_path, "echo", ECHO_MODELS, toml="[skill]\nstreaming = true\n")
    report = validate_folder(folder, registry)
    assert report.valid
    assert any("ignored" in w for w in report.warnings)


def test_sample_folders_hold_no_transport_code():
    allowed = {"models.json", "skill.toml", "SKILL.md", "defaults", "examples"}
    for folder in SAMPLE_SKILLS_DIR.iterdir():
        if folder.is_dir():
            assert {p.name for p in folder.iterdir()} <= allowed, folder.name
            assert "models.json" in {p.name for p in folder.iterdir()}
