from __future__ import annotations

import json

import pytest

from labpack.errors import IllegalDeletion, MalformedCatalog
from labpack.model import ModuleKind
from labpack.templates import (
    TRANSVERSAL,
    ChecklistCategory,
    Level,
    TemplateEntry,
    builtin_catalog,
    builtin_checklist,
    load_catalog,
)

# Experiment-module entries, transcribed by hand.
EXPERIMENT_TREE = {
    "4.1": ("Planning", ["List of replication activities", "Estimated workload", "General schedule"]),
    "4.2": ("Study conception", ["Objectives", "Hypotheses and sub studies", "Factors and response variables", "Contextual variables"]),
    "4.3": ("Experimental design", ["Design alternatives", "Guidelines for selecting the experimental design", "Validation of the experimental design"]),
    "4.4": ("Operation", ["Instructions for preparing material", "Operating material", "Instructions for running sessions"]),
    "4.5": ("Analysis", ["Data collection", "Analysis methods", "Results interpretation"]),
}


def write(tmp_path, elements):
    path = tmp_path / "ext.json"
    path.write_text(json.dumps(elements, indent=2))
    return path


def test_experiment_entries_exact():
    catalog = builtin_catalog()
    exp = {e.number: e for e in catalog.for_kind(ModuleKind.EXPERIMENT)}
    expected = {}
    for first, (title, leaves) in EXPERIMENT_TREE.items():
        expected[first] = title
        for i, leaf in enumerate(leaves, start=1):
            expected[f"{first}.{i}"] = leaf
    assert {n: e.title for n, e in exp.items()} == expected
    assert all(e.level is Level.MANDATORY for e in exp.values())
    assert len([n for n in exp if n.count(".") == 1]) == 5
    assert len([n for n in exp if n.count(".") == 2]) == 16


def test_replication_description_entry():
    entry = builtin_catalog().entry("6.n.1")
    assert (entry.title, entry.level, entry.module_kind) == (
        "Description of the replication", Level.MANDATORY, ModuleKind.REPLICATION,
    )
    assert builtin_catalog().lookup("6.3.1") == entry


def test_invented_entries_are_recommended():
    for entry in builtin_catalog().entries:
        if entry.module_kind is not ModuleKind.EXPERIMENT and entry.number != "6.n.1":
            assert entry.level is Level.RECOMMENDED, entry.number


def test_catalog_numbers_unique_and_rooted():
    entries = builtin_catalog().entries
    assert len({e.number for e in entries}) == len(entries)
    for e in entries:
        assert int(e.number.split(".")[0]) == e.module_kind.module_number


def test_builtin_is_deterministic():
    assert builtin_catalog() == builtin_catalog()
    assert builtin_checklist() == builtin_checklist()


def test_checklist_items():
    items = {i.code: i for i in builtin_checklist()}
    assert list(items) == ["RP", "ST", "RR", "NS"]
    assert items["RP"].target_sections == ("4.1",)
    assert items["ST"].target_sections == ("4.4.3",)
    assert items["RR"].target_sections == ("6.n.1",)
    assert items["NS"].target_sections == (TRANSVERSAL,)
    assert items["NS"].components == (
        "Conventional structures (index, table of contents, sections)",
        "Hyperlinks",
        "External references management",
        "Search engine",
    )
    assert items["ST"].components[0] == "Maximum session time for subjects"
    assert items["RP"].category is ChecklistCategory.INSTRUCTIONS_FOR_REPLICATOR
    assert items["NS"].category is ChecklistCategory.STRUCTURAL_USABILITY


def test_checklist_targets_exist_in_catalog():
    catalog = builtin_catalog()
    for item in catalog.checklist:
        for target in item.target_sections:
            assert target == TRANSVERSAL or catalog.entry(target) is not None


def test_pattern_matching():
    entry = TemplateEntry("6.n.1", "x", Level.MANDATORY, ModuleKind.REPLICATION)
    assert entry.instantiate(4) == "6.4.1"
    assert entry.matches("6.12.1") and not entry.matches("6.0.1") and not entry.matches("6.1.2")


def test_extension_adds_entry(tmp_path):
    path = write(tmp_path, [{"number": "4.6", "title": "Threats to validity", "level": "Recommended", "module_kind": "Experiment"}])
    catalog = load_catalog(path)
    assert len(catalog.entries) == len(builtin_catalog().entries) + 1
    assert catalog.entry("4.6").title == "Threats to validity"


def test_extension_promotes_recommended(tmp_path):
    path = write(tmp_path, [{"number": "2.1", "title": "Constructs and theory", "level": "Mandatory", "module_kind": "Theory"}])
    assert load_catalog(path).entry("2.1").level is Level.MANDATORY


def test_extension_adds_checklist_item(tmp_path):
    path = write(tmp_path, [
        {"number": "4.6", "title": "Threats", "module_kind": "Experiment"},
        {"code": "TV", "category": "InstructionsForReplicator", "components": ["Threat list"], "targets": ["4.6"]},
    ])
    assert load_catalog(path).item("TV").target_sections == ("4.6",)


def test_empty_extension_equals_builtin(tmp_path):
    assert load_catalog(write(tmp_path, [])) == builtin_catalog()
    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert load_catalog(empty) == builtin_catalog()


def test_deleting_mandatory_is_illegal(tmp_path):
    with pytest.raises(IllegalDeletion) as err:
        load_catalog(write(tmp_path, [{"number": "4.1.1", "remove": True}]))
    assert err.value.number == "4.1.1"


def test_demoting_mandatory_is_illegal(tmp_path):
    with pytest.raises(IllegalDeletion):
        load_catalog(write(tmp_path, [{"number": "4.2", "title": "Study conception", "level": "Recommended", "module_kind": "Experiment"}]))


def test_removing_recommended_is_allowed(tmp_path):
    catalog = load_catalog(write(tmp_path, [{"number": "1.3", "remove": True}]))
    assert catalog.entry("1.3") is None


@pytest.mark.parametrize(
    "text, line",
    [
        ('[\n  {"number": "4.6"}\n]', 2),
        ('[\n  {"number": "4.6", "title": "x", "module_kind": "Experiment"},\n  {"number": "4.x", "title": "y", "module_kind": "Experiment"}\n]', 3),
        ('[\n  {"code": "ZZ", "category": "Nope", "components": ["a"], "targets": []}\n]', 2),
        ('[\n  {"number": "4.8", "title": "gap", "module_kind": "Experiment"}\n]', 1),
        ('[\n  {"number": "4.6", "title": "x", "module_kind": "Theory"}\n]', 2),
        ("[ not json", 1),
        ('{"number": "4.6"}', 1),
    ],
)
def test_malformed_catalog(tmp_path, text, line):
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(MalformedCatalog) as err:
        load_catalog(path)
    assert err.value.line == line


def test_checklist_target_must_exist(tmp_path):
    with pytest.raises(MalformedCatalog):
        load_catalog(write(tmp_path, [{"code": "ZZ", "category": "OperationalMaterial", "components": ["a"], "targets": ["9.9"]}]))
