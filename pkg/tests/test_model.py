from __future__ import annotations

from dataclasses import replace
from datetime import datetime

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import REPLICATION, make_manifest
from labpack.findings import FindingCode
from labpack.lifecycle import add_replication
from labpack.model import (
    CORE_KINDS,
    Attachment,
    LPModule,
    ModuleKind,
    Package,
    Section,
    build_section_tree,
    flatten_sections,
    kind_of_module_id,
    number_key,
)
from labpack.structure import validate_structure


def minimal_package() -> Package:
    return Package(make_manifest(), tuple(LPModule(kind) for kind in CORE_KINDS))


def codes(findings):
    return [f.code for f in findings]


def test_module_numbering():
    assert [k.module_number for k in ModuleKind] == [1, 2, 3, 4, 5, 6, 7]
    assert LPModule(ModuleKind.REPLICATION, 2).number == "6.2"
    assert LPModule(ModuleKind.EXPERIMENT).number == "4"
    assert kind_of_module_id("7.3") is ModuleKind.AGGREGATION


def test_number_key_orders_numerically():
    assert sorted(["4.10", "4.2", "4.1.1", "4.1"], key=number_key) == ["4.1", "4.1.1", "4.2", "4.10"]


def test_manifest_problems():
    assert make_manifest().problems() == []
    assert make_manifest().__class__(
        package_id="Bad Id", experiment_name="x", family="", language_tag="en",
        contacts=(), created=datetime(2024, 1, 1),
    ).problems()


def test_minimal_package_is_valid():
    assert validate_structure(minimal_package()) == []


def test_golden_is_structurally_valid(golden):
    assert validate_structure(golden) == []


@pytest.mark.parametrize("kind", CORE_KINDS)
def test_missing_core_module_gives_one_finding(golden, kind):
    pruned = replace(golden, core_modules=tuple(m for m in golden.core_modules if m.kind is not kind))
    found = validate_structure(pruned)
    assert codes(found) == [FindingCode.MISSING_CORE_MODULE]
    assert found[0].module == str(kind.module_number)


def test_duplicate_core_module(golden):
    dup = replace(golden, core_modules=golden.core_modules + (golden.core(ModuleKind.THEORY),))
    assert codes(validate_structure(dup)) == [FindingCode.DUPLICATE_CORE_MODULE]


def test_evolution_out_of_sync():
    package = add_replication(add_replication(minimal_package(), REPLICATION), REPLICATION)
    evolution = package.core(ModuleKind.EVOLUTION)
    evolution = replace(evolution.without_section("5.2"), entries=evolution.entries[:1])
    found = validate_structure(package.replace_module(evolution))
    assert codes(found) == [FindingCode.EVOLUTION_OUT_OF_SYNC]
    assert "expected=2, found=1" in found[0].message


def test_duplicate_study_index(golden):
    again = golden.study_modules[0]
    found = validate_structure(replace(golden, study_modules=golden.study_modules + (again,)))
    assert FindingCode.DUPLICATE_STUDY_INDEX in codes(found)


def test_bad_section_numbering(golden):
    experiment = golden.core(ModuleKind.EXPERIMENT).without_section("4.2.1")
    found = validate_structure(golden.replace_module(experiment))
    assert codes(found) == [FindingCode.BAD_SECTION_NUMBER] * 3


def test_empty_title(golden):
    experiment = golden.core(ModuleKind.EXPERIMENT).replace_section("4.2", title=" ")
    assert codes(validate_structure(golden.replace_module(experiment))) == [FindingCode.EMPTY_SECTION_TITLE]


@pytest.mark.parametrize("path", ["/etc/passwd", "../x", "a/../../b", "a//b", ""])
def test_bad_attachment_paths(golden, path):
    theory = replace(golden.core(ModuleKind.THEORY), attachments=(Attachment(path, b"x"),))
    assert codes(validate_structure(golden.replace_module(theory))) == [FindingCode.INVALID_ATTACHMENT_PATH]


def test_section_prefix_property(golden):
    for module in golden.modules:
        def walk(sections, parent):
            for s in sections:
                assert s.number.startswith(parent + ".")
                walk(s.children, s.number)
        walk(module.sections, module.number)


def test_build_section_tree_round_trip(golden):
    for module in golden.modules:
        assert build_section_tree(flatten_sections(module.sections)) == module.sections


def test_digest_is_stable_and_content_sensitive(golden):
    experiment = golden.core(ModuleKind.EXPERIMENT)
    assert experiment.content_digest == replace(experiment).content_digest
    edited = experiment.replace_section("4.2.1", body=experiment.section("4.2.1").body + " ")
    assert edited.content_digest != experiment.content_digest


def test_digest_frames_are_unambiguous():
    a = LPModule(ModuleKind.THEORY, sections=(Section("2.1", "A", "bc"),))
    b = LPModule(ModuleKind.THEORY, sections=(Section("2.1", "A", "b"), Section("2.2", "c", "")))
    assert a.content_digest != b.content_digest


def test_values_are_immutable(golden):
    with pytest.raises(Exception):
        golden.manifest.package_id = "x"
    with pytest.raises(Exception):
        golden.core_modules[0].sections = ()


def test_replace_section_unknown_raises(golden):
    with pytest.raises(KeyError):
        golden.core(ModuleKind.THEORY).replace_section("2.9", body="x")


@settings(max_examples=60, deadline=None)
@given(st.text(max_size=40), st.binary(max_size=40))
def test_digest_changes_with_any_body_or_attachment(body, data):
    base = LPModule(ModuleKind.THEORY, sections=(Section("2.1", "T", "fixed"),), attachments=(Attachment("a.bin", b"fixed"),))
    with_body = base.replace_section("2.1", body=body)
    assert (with_body.content_digest == base.content_digest) == (body == "fixed")
    with_data = replace(base, attachments=(Attachment("a.bin", data),))
    assert (with_data.content_digest == base.content_digest) == (data == b"fixed")
