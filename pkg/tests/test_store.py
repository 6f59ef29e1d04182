from __future__ import annotations

import hashlib
import json
import os
import random
import shutil
from dataclasses import replace
from pathlib import Path

import pytest

from conftest import GOLDEN_DIR, build_golden, make_manifest
from generators import random_package
from labpack.errors import IoFailure, PackageParseError, RefusedOverwriteOfSnapshot, StructurallyInvalidPackage
from labpack.lifecycle import publish_core_version
from labpack.model import CORE_KINDS, LPModule, ModuleKind, Package
from labpack.store import (
    LOCK_FILE,
    DiagnosticCode,
    owned_tree,
    package_lock,
    parse_package,
    render_package,
    serialize_package,
    update_package,
)


def tree_digest(files: dict[str, bytes]) -> str:
    h = hashlib.sha256()
    for rel in sorted(files):
        h.update(rel.encode() + b"\0" + files[rel] + b"\0")
    return h.hexdigest()


@pytest.fixture
def golden_copy(tmp_path) -> Path:
    target = tmp_path / "pkg"
    shutil.copytree(GOLDEN_DIR, target)
    return target


def test_committed_golden_matches_builder():
    assert parse_package(GOLDEN_DIR) == build_golden()
    assert render_package(build_golden()) == owned_tree(GOLDEN_DIR)


def test_round_trip_is_byte_identical(golden_copy, tmp_path):
    out = tmp_path / "out"
    serialize_package(parse_package(golden_copy), out)
    assert owned_tree(out) == owned_tree(golden_copy)


def test_rewrite_in_place_changes_nothing(golden_copy):
    before = owned_tree(golden_copy)
    serialize_package(parse_package(golden_copy), golden_copy)
    assert owned_tree(golden_copy) == before


def test_two_serializations_have_equal_digests(tmp_path):
    package = build_golden()
    serialize_package(package, tmp_path / "a")
    serialize_package(package, tmp_path / "b")
    assert tree_digest(owned_tree(tmp_path / "a")) == tree_digest(owned_tree(tmp_path / "b"))


def test_minimal_package_layout(tmp_path):
    package = Package(make_manifest(), tuple(LPModule(k) for k in CORE_KINDS))
    serialize_package(package, tmp_path)
    assert sorted(p.name for p in (tmp_path / "modules").iterdir()) == [
        "01-introduction", "02-theory", "03-training", "04-experiment", "05-evolution",
    ]
    assert (tmp_path / "labpack.json").is_file()
    assert parse_package(tmp_path) == package


def test_json_is_canonical(golden_copy):
    text = (golden_copy / "labpack.json").read_text(encoding="utf-8")
    data = json.loads(text)
    assert text == json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def test_missing_manifest(tmp_path):
    with pytest.raises(PackageParseError) as err:
        parse_package(tmp_path)
    assert err.value.codes == ["MissingManifest"]


def test_unsupported_format_version(golden_copy):
    path = golden_copy / "modules" / "02-theory" / "module.json"
    data = json.loads(path.read_text())
    data["format_version"] = 99
    path.write_text(json.dumps(data, indent=2))
    with pytest.raises(PackageParseError) as err:
        parse_package(golden_copy)
    (diag,) = err.value.diagnostics
    assert diag.code is DiagnosticCode.UNSUPPORTED_FORMAT_VERSION
    assert diag.file == "modules/02-theory/module.json"
    lines = path.read_text().splitlines()
    assert '"format_version"' in lines[diag.line - 1]


def test_k_independent_errors_give_k_diagnostics(golden_copy):
    path = golden_copy / "modules" / "04-experiment" / "module.json"
    data = json.loads(path.read_text())
    data["module_number"] = 9
    data["depends_on"] = "2"
    data["evidence"] = [{"item": "RP"}]
    data["content_digest"] = "nope"
    data["surprise"] = True
    path.write_text(json.dumps(data, indent=2, sort_keys=True))
    with pytest.raises(PackageParseError) as err:
        parse_package(golden_copy)
    assert len(err.value.diagnostics) >= 5


def test_dangling_and_unlisted_attachments(golden_copy):
    exp = golden_copy / "modules" / "04-experiment"
    (exp / "attachments" / "materials" / "form.txt").unlink()
    (exp / "attachments" / "stray.bin").write_bytes(b"x")
    with pytest.raises(PackageParseError) as err:
        parse_package(golden_copy)
    assert sorted(err.value.codes) == ["DanglingAttachment", "UnlistedAttachment"]


def test_missing_section_file_and_orphan(golden_copy):
    sec = golden_copy / "modules" / "02-theory" / "sections"
    (sec / "2.1.md").rename(sec / "2.9.md")
    with pytest.raises(PackageParseError) as err:
        parse_package(golden_copy)
    assert sorted(err.value.codes) == ["MissingSectionFile", "OrphanSectionFile"]


def test_malformed_json_reports_line(golden_copy):
    (golden_copy / "labpack.json").write_text('{\n  "package_id": "x",\n  oops\n}\n')
    with pytest.raises(PackageParseError) as err:
        parse_package(golden_copy)
    (diag,) = err.value.diagnostics
    assert diag.code is DiagnosticCode.MALFORMED_METADATA and diag.line == 3


def test_refuses_to_alter_published_snapshot(golden_copy):
    package = parse_package(golden_copy)
    snap = package.version_history[0]
    theory = snap.module(ModuleKind.THEORY)
    altered = theory.replace_section("2.1", body="rewritten history\n")
    snap = replace(snap, modules=tuple(altered if m.kind is ModuleKind.THEORY else m for m in snap.modules))
    before = owned_tree(golden_copy)
    with pytest.raises(RefusedOverwriteOfSnapshot) as err:
        serialize_package(replace(package, version_history=(snap,)), golden_copy)
    assert err.value.version_id == 1
    assert owned_tree(golden_copy) == before


def test_refuses_to_drop_published_snapshot(golden_copy):
    package = parse_package(golden_copy)
    with pytest.raises(RefusedOverwriteOfSnapshot):
        serialize_package(replace(package, version_history=()), golden_copy)


def test_structurally_invalid_package_is_not_written(tmp_path):
    package = Package(make_manifest(), tuple(LPModule(k) for k in CORE_KINDS[:-1]))
    with pytest.raises(StructurallyInvalidPackage):
        serialize_package(package, tmp_path)
    assert not (tmp_path / "labpack.json").exists()


def test_failed_write_leaves_previous_tree(golden_copy, monkeypatch):
    before = owned_tree(golden_copy)
    package = parse_package(golden_copy)
    package = publish_core_version(package, "second")
    real_replace = os.replace
    calls = {"n": 0}

    def flaky(src, dst):
        calls["n"] += 1
        if calls["n"] == 3:
            raise OSError(28, "No space left on device", str(dst))
        return real_replace(src, dst)

    monkeypatch.setattr(os, "replace", flaky)
    with pytest.raises(IoFailure):
        serialize_package(package, golden_copy)
    monkeypatch.setattr(os, "replace", real_replace)
    assert owned_tree(golden_copy) == before
    assert not [p for p in golden_copy.iterdir() if p.name.startswith(".labpack-staging")]


def test_update_package_round_trips(golden_copy):
    update_package(golden_copy, lambda p: publish_core_version(p, "next"))
    package = parse_package(golden_copy)
    assert [s.version_id for s in package.version_history] == [1, 2]


def test_lock_excludes_other_writers(tmp_path):
    from filelock import FileLock, Timeout

    with package_lock(tmp_path):
        with pytest.raises(Timeout):
            FileLock(str(tmp_path / LOCK_FILE), timeout=0).acquire()


def test_lock_is_reentrant(tmp_path):
    with package_lock(tmp_path):
        with package_lock(tmp_path):
            pass


def test_tool_ignores_foreign_files(golden_copy):
    (golden_copy / "README.txt").write_text("mine")
    serialize_package(parse_package(golden_copy), golden_copy)
    assert (golden_copy / "README.txt").read_text() == "mine"


@pytest.mark.parametrize("seed", range(25))
def test_random_package_round_trip(tmp_path, seed):
    package = random_package(random.Random(seed))
    serialize_package(package, tmp_path / "a")
    parsed = parse_package(tmp_path / "a")
    assert parsed == package
    serialize_package(parsed, tmp_path / "b")
    assert owned_tree(tmp_path / "a") == owned_tree(tmp_path / "b") == render_package(package)
