"""On-disk package layout, parsing and deterministic serialization.

Layout, relative to the package root::

    labpack.json
    modules/01-introduction/module.json
    modules/01-introduction/sections/1.1.md
    modules/04-experiment/attachments/<path>
    modules/06-replications/6.<n>/module.json ...
    modules/07-aggregations/7.<n>/module.json ...
    versions/<id>/snapshot.json
    versions/<id>/modules/0k-<kind>/...        (frozen core modules)
    assessments/<replication-id>.json

All JSON is written with sorted keys, two-space indent, UTF-8 and a trailing
newline. Section files hold the section body verbatim.
"""

from __future__ import annotations

import json
import os
import re
import shutil
import tempfile
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator

from filelock import FileLock

from labpack import _json
from labpack.assessment import Assessment
from labpack.errors import (
    AssessmentError,
    IoFailure,
    PackageParseError,
    RefusedOverwriteOfSnapshot,
    StructurallyInvalidPackage,
)
from labpack.model import (
    FORMAT_VERSION,
    SUPPORTED_FORMAT_VERSIONS,
    Attachment,
    Contact,
    CoreSnapshot,
    Evidence,
    EvolutionEntry,
    LPModule,
    Manifest,
    ModuleKind,
    Package,
    build_section_tree,
    is_number,
    module_sort_key,
    number_key,
)
from labpack.structure import attachment_path_problem, validate_structure

MANIFEST_FILE = "labpack.json"
LOCK_FILE = ".labpack.lock"

CORE_DIRS = {
    ModuleKind.INTRODUCTION: "01-introduction",
    ModuleKind.THEORY: "02-theory",
    ModuleKind.TRAINING: "03-training",
    ModuleKind.EXPERIMENT: "04-experiment",
    ModuleKind.EVOLUTION: "05-evolution",
}
STUDY_DIRS = {
    ModuleKind.REPLICATION: "06-replications",
    ModuleKind.AGGREGATION: "07-aggregations",
}
_OWNED_TOP = ("modules", "versions", "assessments")


class DiagnosticCode(str, Enum):
    MISSING_MANIFEST = "MissingManifest"
    MALFORMED_METADATA = "MalformedMetadata"
    UNSUPPORTED_FORMAT_VERSION = "UnsupportedFormatVersion"
    DANGLING_ATTACHMENT = "DanglingAttachment"
    UNLISTED_ATTACHMENT = "UnlistedAttachment"
    MISSING_MODULE_METADATA = "MissingModuleMetadata"
    MISSING_SECTION_FILE = "MissingSectionFile"
    ORPHAN_SECTION_FILE = "OrphanSectionFile"
    UNEXPECTED_ENTRY = "UnexpectedEntry"
    ENCODING_ERROR = "EncodingError"
    MALFORMED_ASSESSMENT = "MalformedAssessment"


@dataclass(frozen=True)
class ParseDiagnostic:
    file: str
    line: int
    code: DiagnosticCode
    message: str

    def format(self) -> str:
        return f"{self.file}:{self.line}: {self.code.value}: {self.message}"

    def to_dict(self) -> dict:
        return {"file": self.file, "line": self.line, "code": self.code.value, "message": self.message}


# -- locking -----------------------------------------------------------------

_locks: dict[str, FileLock] = {}
_locks_guard = threading.Lock()


@contextmanager
def package_lock(root: str | Path, timeout: float = 30) -> Iterator[None]:
    """Advisory single-writer lock on a package root (re-entrant in-process)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    key = str(root.resolve())
    with _locks_guard:
        lock = _locks.get(key)
        if lock is None:
            lock = _locks[key] = FileLock(str(root / LOCK_FILE), timeout=timeout)
    with lock:
        yield


# -- parsing -----------------------------------------------------------------


def _line_of(text: str, key: str, after: int = 0) -> int:
    """1-based line of the first ``"key":`` in ``text`` (1 when not found)."""
    m = re.compile(re.escape(json.dumps(key, ensure_ascii=False)) + r"\s*:").search(text, after)
    if m is None:
        m = re.compile(re.escape(json.dumps(key)) + r"\s*:").search(text, after)
    return text.count("\n", 0, m.start()) + 1 if m else 1


class _Parser:
    def __init__(self, root: Path):
        self.root = root
        self.diags: list[ParseDiagnostic] = []

    def diag(self, path: Path, line: int, code: DiagnosticCode, message: str) -> None:
        rel = path.relative_to(self.root).as_posix() if path.is_absolute() else path.as_posix()
        self.diags.append(ParseDiagnostic(rel, max(1, line), code, message))

    def read_text(self, path: Path) -> str | None:
        try:
            return path.read_bytes().decode("utf-8")
        except UnicodeDecodeError as exc:
            self.diag(path, 1, DiagnosticCode.ENCODING_ERROR, f"not valid UTF-8 ({exc.reason})")
        except OSError as exc:
            self.diag(path, 1, DiagnosticCode.MALFORMED_METADATA, f"cannot read: {exc.strerror}")
        return None

    def read_json(self, path: Path) -> tuple[dict, str] | None:
        text = self.read_text(path)
        if text is None:
            return None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            self.diag(path, exc.lineno, DiagnosticCode.MALFORMED_METADATA, f"invalid JSON: {exc.msg}")
            return None
        if not isinstance(data, dict):
            self.diag(path, 1, DiagnosticCode.MALFORMED_METADATA, "top-level value must be an object")
            return None
        return data, text

    def format_version(self, path: Path, data: dict, text: str) -> bool:
        fv = data.get("format_version")
        if not isinstance(fv, int) or isinstance(fv, bool):
            self.diag(path, _line_of(text, "format_version"), DiagnosticCode.MALFORMED_METADATA,
                      "format_version must be an integer")
            return False
        if fv not in SUPPORTED_FORMAT_VERSIONS:
            self.diag(path, _line_of(text, "format_version"), DiagnosticCode.UNSUPPORTED_FORMAT_VERSION,
                      f"format_version {fv} is not supported (supported: {sorted(SUPPORTED_FORMAT_VERSIONS)})")
            return False
        return True

    # manifest

    def manifest(self) -> Manifest | None:
        path = self.root / MANIFEST_FILE
        if not path.is_file():
            self.diag(path, 1, DiagnosticCode.MISSING_MANIFEST, f"{MANIFEST_FILE} not found at package root")
            return None
        loaded = self.read_json(path)
        if loaded is None:
            return None
        data, text = loaded
        ok = self.format_version(path, data, text)
        fields: dict = {}
        allowed = {"package_id", "experiment_name", "family", "language_tag", "contacts", "created", "format_version"}
        for key in sorted(set(data) - allowed):
            self.diag(path, _line_of(text, key), DiagnosticCode.MALFORMED_METADATA, f"unknown key {key!r}")
            ok = False
        for key in ("package_id", "experiment_name", "family", "language_tag"):
            value = data.get(key)
            if not isinstance(value, str):
                self.diag(path, _line_of(text, key), DiagnosticCode.MALFORMED_METADATA, f"{key} must be a string")
                ok = False
            fields[key] = value
        contacts = data.get("contacts")
        parsed_contacts = []
        if not isinstance(contacts, list):
            self.diag(path, _line_of(text, "contacts"), DiagnosticCode.MALFORMED_METADATA, "contacts must be a list")
            ok = False
        else:
            for c in contacts:
                if not (isinstance(c, dict) and set(c) == {"name", "email"}
                        and all(isinstance(v, str) for v in c.values())):
                    self.diag(path, _line_of(text, "contacts"), DiagnosticCode.MALFORMED_METADATA,
                              "each contact needs exactly string 'name' and 'email'")
                    ok = False
                    continue
                parsed_contacts.append(Contact(c["name"], c["email"]))
        try:
            created = _json.parse_instant(data.get("created"))
        except (ValueError, TypeError) as exc:
            self.diag(path, _line_of(text, "created"), DiagnosticCode.MALFORMED_METADATA,
                      f"created must be an RFC 3339 UTC instant ({exc})")
            ok = False
            created = None
        if not ok:
            return None
        manifest = Manifest(
            package_id=fields["package_id"],
            experiment_name=fields["experiment_name"],
            family=fields["family"],
            language_tag=fields["language_tag"],
            contacts=tuple(parsed_contacts),
            created=created,
            format_version=data["format_version"],
        )
        for problem in manifest.problems():
            self.diag(path, 1, DiagnosticCode.MALFORMED_METADATA, problem)
        return manifest

    # modules

    def module(self, directory: Path, kind: ModuleKind, study_index: int | None) -> LPModule | None:
        meta_path = directory / "module.json"
        if not meta_path.is_file():
            self.diag(meta_path, 1, DiagnosticCode.MISSING_MODULE_METADATA, "module.json not found")
            return None
        loaded = self.read_json(meta_path)
        if loaded is None:
            return None
        data, text = loaded
        before = len(self.diags)

        def bad(key: str, message: str, code=DiagnosticCode.MALFORMED_METADATA) -> None:
            self.diag(meta_path, _line_of(text, key), code, message)

        self.format_version(meta_path, data, text)
        allowed = {"format_version", "kind", "module_number", "sections", "attachments",
                   "depends_on", "evidence", "content_digest"}
        if kind.is_study:
            allowed.add("study_index")
        if kind is ModuleKind.EVOLUTION:
            allowed.add("entries")
        for key in sorted(set(data) - allowed):
            bad(key, f"unknown key {key!r}")

        if data.get("kind") != kind.value:
            bad("kind", f"kind must be {kind.value!r} for this directory, found {data.get('kind')!r}")
        if data.get("module_number") != kind.module_number:
            bad("module_number", f"module_number must be {kind.module_number}")
        if kind.is_study and data.get("study_index") != study_index:
            bad("study_index", f"study_index must be {study_index} for directory {directory.name}")
        module_id = f"{kind.module_number}.{study_index}" if kind.is_study else str(kind.module_number)

        sections = data.get("sections", {})
        flat: dict[str, tuple[str, str]] = {}
        if not isinstance(sections, dict):
            bad("sections", "sections must map section numbers to titles")
            sections = {}
        sec_dir = directory / "sections"
        for number, title in sections.items():
            if not is_number(number) or not number.startswith(module_id + "."):
                bad(number, f"section number {number!r} is not under module {module_id}")
                continue
            if not isinstance(title, str):
                bad(number, f"title of section {number} must be a string")
                continue
            body_path = sec_dir / f"{number}.md"
            if not body_path.is_file():
                bad(number, f"section file sections/{number}.md is missing", DiagnosticCode.MISSING_SECTION_FILE)
                continue
            body = self.read_text(body_path)
            if body is None:
                continue
            flat[number] = (title, body)
        if sec_dir.is_dir():
            for entry in sorted(sec_dir.iterdir()):
                if not (entry.is_file() and entry.suffix == ".md" and entry.stem in sections):
                    self.diag(entry, 1, DiagnosticCode.ORPHAN_SECTION_FILE,
                              "file is not listed in module.json sections")

        attachments = []
        listed = data.get("attachments", [])
        att_dir = directory / "attachments"
        if not isinstance(listed, list) or not all(isinstance(p, str) for p in listed):
            bad("attachments", "attachments must be a list of relative paths")
            listed = []
        root_resolved = self.root.resolve()
        for rel in listed:
            problem = attachment_path_problem(rel)
            if problem:
                bad("attachments", f"attachment path {rel!r} {problem}")
                continue
            path = att_dir / rel
            try:
                inside = path.resolve().is_relative_to(root_resolved)
            except OSError:
                inside = False
            if not inside:
                bad("attachments", f"attachment {rel!r} resolves outside the package root")
                continue
            if not path.is_file():
                bad("attachments", f"attachment {rel!r} does not exist", DiagnosticCode.DANGLING_ATTACHMENT)
                continue
            attachments.append(Attachment(rel, path.read_bytes()))
        if att_dir.is_dir():
            listed_set = set(listed)
            for path in sorted(p for p in att_dir.rglob("*") if p.is_file()):
                rel = path.relative_to(att_dir).as_posix()
                if rel not in listed_set:
                    self.diag(path, 1, DiagnosticCode.UNLISTED_ATTACHMENT,
                              "attachment is not listed in module.json")

        depends_on = data.get("depends_on", [])
        if not isinstance(depends_on, list) or not all(isinstance(d, str) and is_number(d) for d in depends_on):
            bad("depends_on", "depends_on must be a list of module ids")
            depends_on = []

        evidence = []
        raw_evidence = data.get("evidence", [])
        if not isinstance(raw_evidence, list):
            bad("evidence", "evidence must be a list")
            raw_evidence = []
        for ev in raw_evidence:
            if (isinstance(ev, dict) and set(ev) == {"item", "component", "locus"}
                    and isinstance(ev["item"], str) and isinstance(ev["locus"], str)
                    and isinstance(ev["component"], int) and not isinstance(ev["component"], bool)
                    and ev["component"] >= 1):
                evidence.append(Evidence(ev["item"], ev["component"], ev["locus"]))
            else:
                bad("evidence", "evidence entries need 'item', 'component' (>= 1) and 'locus'")

        entries = []
        if kind is ModuleKind.EVOLUTION:
            raw_entries = data.get("entries", [])
            if not isinstance(raw_entries, list):
                bad("entries", "entries must be a list")
                raw_entries = []
            for e in raw_entries:
                keys = {"section", "study", "core_version", "date", "summary"}
                if (isinstance(e, dict) and set(e) == keys
                        and all(isinstance(e[k], str) for k in ("section", "study", "date", "summary"))
                        and (e["core_version"] is None or (isinstance(e["core_version"], int)
                                                          and not isinstance(e["core_version"], bool)))):
                    entries.append(EvolutionEntry(e["section"], e["study"], e["core_version"], e["date"], e["summary"]))
                else:
                    bad("entries", "evolution entries need section, study, core_version, date and summary")

        digest = data.get("content_digest")
        if not (isinstance(digest, str) and re.fullmatch(r"[0-9a-f]{64}", digest)):
            bad("content_digest", "content_digest must be a 64-digit lowercase hex SHA-256")
            digest = None

        if len(self.diags) != before:
            return None
        return LPModule(
            kind=kind,
            study_index=study_index,
            sections=build_section_tree(flat),
            attachments=tuple(sorted(attachments, key=lambda a: a.path)),
            depends_on=tuple(depends_on),
            evidence=tuple(evidence),
            entries=tuple(entries),
            recorded_digest=digest,
        )

    def module_tree(self, modules_dir: Path) -> tuple[list[LPModule], list[LPModule]]:
        core: list[LPModule] = []
        studies: list[LPModule] = []
        if not modules_dir.is_dir():
            return core, studies
        core_by_dir = {v: k for k, v in CORE_DIRS.items()}
        study_by_dir = {v: k for k, v in STUDY_DIRS.items()}
        for entry in sorted(modules_dir.iterdir()):
            if entry.name in core_by_dir and entry.is_dir():
                m = self.module(entry, core_by_dir[entry.name], None)
                if m is not None:
                    core.append(m)
            elif entry.name in study_by_dir and entry.is_dir():
                kind = study_by_dir[entry.name]
                pattern = re.compile(rf"^{kind.module_number}\.([1-9][0-9]*)$")
                for sub in sorted(entry.iterdir()):
                    m = pattern.match(sub.name)
                    if not (m and sub.is_dir()):
                        self.diag(sub, 1, DiagnosticCode.UNEXPECTED_ENTRY,
                                  f"expected a directory named {kind.module_number}.<n>")
                        continue
                    mod = self.module(sub, kind, int(m.group(1)))
                    if mod is not None:
                        studies.append(mod)
            else:
                self.diag(entry, 1, DiagnosticCode.UNEXPECTED_ENTRY, "not part of the module layout")
        core.sort(key=module_sort_key)
        studies.sort(key=module_sort_key)
        return core, studies

    # versions

    def snapshot(self, directory: Path) -> CoreSnapshot | None:
        path = directory / "snapshot.json"
        if not path.is_file():
            self.diag(path, 1, DiagnosticCode.MISSING_MODULE_METADATA, "snapshot.json not found")
            return None
        loaded = self.read_json(path)
        if loaded is None:
            return None
        data, text = loaded
        before = len(self.diags)
        self.format_version(path, data, text)
        for key in sorted(set(data) - {"format_version", "version_id", "timestamp", "change_note", "digests"}):
            self.diag(path, _line_of(text, key), DiagnosticCode.MALFORMED_METADATA, f"unknown key {key!r}")
        vid = data.get("version_id")
        if not isinstance(vid, int) or isinstance(vid, bool) or str(vid) != directory.name:
            self.diag(path, _line_of(text, "version_id"), DiagnosticCode.MALFORMED_METADATA,
                      f"version_id must equal the directory name {directory.name}")
        try:
            timestamp = _json.parse_instant(data.get("timestamp"))
        except (ValueError, TypeError) as exc:
            self.diag(path, _line_of(text, "timestamp"), DiagnosticCode.MALFORMED_METADATA, f"bad timestamp ({exc})")
            timestamp = None
        note = data.get("change_note")
        if not isinstance(note, str):
            self.diag(path, _line_of(text, "change_note"), DiagnosticCode.MALFORMED_METADATA, "change_note must be text")
        digests = data.get("digests")
        if not (isinstance(digests, dict) and all(isinstance(v, str) for v in digests.values())):
            self.diag(path, _line_of(text, "digests"), DiagnosticCode.MALFORMED_METADATA,
                      "digests must map module numbers to hex digests")
            digests = {}
        core, studies = self.module_tree(directory / "modules")
        for m in studies:
            self.diag(directory / "modules", 1, DiagnosticCode.UNEXPECTED_ENTRY,
                      f"snapshot holds study module {m.number}")
        for entry in sorted(directory.iterdir()):
            if entry.name not in ("snapshot.json", "modules"):
                self.diag(entry, 1, DiagnosticCode.UNEXPECTED_ENTRY, "not part of the snapshot layout")
        if len(self.diags) != before:
            return None
        return CoreSnapshot(
            version_id=vid,
            timestamp=timestamp,
            change_note=note,
            modules=tuple(core),
            recorded_digests=tuple(sorted(digests.items(), key=lambda kv: number_key(kv[0]))),
        )

    def versions(self) -> list[CoreSnapshot]:
        vdir = self.root / "versions"
        out = []
        if not vdir.is_dir():
            return out
        for entry in sorted(vdir.iterdir(), key=lambda p: (not p.name.isdigit(), int(p.name) if p.name.isdigit() else 0, p.name)):
            if not (entry.is_dir() and re.fullmatch(r"[1-9][0-9]*", entry.name)):
                self.diag(entry, 1, DiagnosticCode.UNEXPECTED_ENTRY, "expected versions/<positive integer>/")
                continue
            snap = self.snapshot(entry)
            if snap is not None:
                out.append(snap)
        return out

    def assessments(self) -> list[Assessment]:
        adir = self.root / "assessments"
        out = []
        if not adir.is_dir():
            return out
        for entry in sorted(adir.iterdir()):
            if not (entry.is_file() and entry.suffix == ".json"):
                self.diag(entry, 1, DiagnosticCode.UNEXPECTED_ENTRY, "expected <replication-id>.json")
                continue
            text = self.read_text(entry)
            if text is None:
                continue
            try:
                out.append(Assessment.loads(entry.stem, text))
            except json.JSONDecodeError as exc:
                self.diag(entry, exc.lineno, DiagnosticCode.MALFORMED_ASSESSMENT, f"invalid JSON: {exc.msg}")
            except AssessmentError as exc:
                self.diag(entry, 1, DiagnosticCode.MALFORMED_ASSESSMENT, str(exc))
        return out


def parse_package(root: str | Path) -> Package:
    """Parse the package tree at ``root``.

    Raises :class:`PackageParseError` carrying every diagnostic found.
    """
    root = Path(root)
    if not root.is_dir():
        raise PackageParseError(
            [ParseDiagnostic(str(root), 1, DiagnosticCode.MISSING_MANIFEST, "package root is not a directory")]
        )
    parser = _Parser(root)
    manifest = parser.manifest()
    core, studies = parser.module_tree(root / "modules")
    versions = parser.versions()
    assessments = parser.assessments()
    if parser.diags or manifest is None:
        raise PackageParseError(parser.diags)
    return Package(
        manifest=manifest,
        core_modules=tuple(core),
        study_modules=tuple(studies),
        version_history=tuple(versions),
        assessments=tuple(assessments),
    )


# -- rendering ---------------------------------------------------------------


def manifest_dict(manifest: Manifest) -> dict:
    return {
        "package_id": manifest.package_id,
        "experiment_name": manifest.experiment_name,
        "family": manifest.family,
        "language_tag": manifest.language_tag,
        "contacts": [c.to_dict() for c in manifest.contacts],
        "created": _json.format_instant(manifest.created),
        "format_version": manifest.format_version,
    }


def module_dir(module: LPModule) -> str:
    if module.kind.is_study:
        return f"modules/{STUDY_DIRS[module.kind]}/{module.number}"
    return f"modules/{CORE_DIRS[module.kind]}"


def render_module(module: LPModule, prefix: str = "") -> dict[str, bytes]:
    base = prefix + module_dir(module)
    meta = module.metadata()
    meta["content_digest"] = module.content_digest
    files = {f"{base}/module.json": _json.dumps(meta).encode("utf-8")}
    for section in module.walk_sections():
        files[f"{base}/sections/{section.number}.md"] = section.body.encode("utf-8")
    for att in module.attachments:
        files[f"{base}/attachments/{att.path}"] = att.data
    return files


def render_snapshot(snapshot: CoreSnapshot) -> dict[str, bytes]:
    prefix = f"versions/{snapshot.version_id}/"
    meta = {
        "format_version": FORMAT_VERSION,
        "version_id": snapshot.version_id,
        "timestamp": _json.format_instant(snapshot.timestamp),
        "change_note": snapshot.change_note,
        "digests": snapshot.digests,
    }
    files = {prefix + "snapshot.json": _json.dumps(meta).encode("utf-8")}
    for module in snapshot.modules:
        files.update(render_module(module, prefix))
    return files


def render_package(package: Package) -> dict[str, bytes]:
    """Every owned file of the package, keyed by POSIX path relative to the root."""
    files = {MANIFEST_FILE: _json.dumps(manifest_dict(package.manifest)).encode("utf-8")}
    for module in sorted(package.modules, key=module_sort_key):
        files.update(render_module(module))
    for snapshot in package.version_history:
        files.update(render_snapshot(snapshot))
    for assessment in package.assessments:
        files[f"assessments/{assessment.replication_id}.json"] = assessment.dumps().encode("utf-8")
    return files


def read_tree(directory: Path) -> dict[str, bytes]:
    if not directory.is_dir():
        return {}
    return {
        p.relative_to(directory).as_posix(): p.read_bytes()
        for p in sorted(directory.rglob("*"))
        if p.is_file()
    }


def owned_tree(root: str | Path) -> dict[str, bytes]:
    """Bytes of every tool-owned file currently under ``root``."""
    root = Path(root)
    files = {}
    if (root / MANIFEST_FILE).is_file():
        files[MANIFEST_FILE] = (root / MANIFEST_FILE).read_bytes()
    for top in _OWNED_TOP:
        for rel, data in read_tree(root / top).items():
            files[f"{top}/{rel}"] = data
    return files


# -- serialization -----------------------------------------------------------


def _write_files(base: Path, files: dict[str, bytes]) -> None:
    made: set[Path] = set()
    for rel, data in files.items():
        target = base / rel
        if target.parent not in made:
            target.parent.mkdir(parents=True, exist_ok=True)
            made.add(target.parent)
        target.write_bytes(data)


def serialize_package(package: Package, root: str | Path) -> None:
    """Write ``package`` to ``root`` in the canonical layout.

    The new tree is staged next to the old one and swapped in, so a failure
    leaves the previous content in place. Published snapshots are never
    rewritten: if the package's copy of an existing ``versions/<id>`` differs
    from disk (or is missing), :class:`RefusedOverwriteOfSnapshot` is raised.
    """
    errors = validate_structure(package)
    if errors:
        raise StructurallyInvalidPackage(errors)
    root = Path(root)
    files = render_package(package)

    with package_lock(root):
        on_disk_versions: dict[int, dict[str, bytes]] = {}
        vdir = root / "versions"
        if vdir.is_dir():
            for entry in vdir.iterdir():
                if entry.is_dir() and entry.name.isdigit():
                    on_disk_versions[int(entry.name)] = read_tree(entry)
        wanted_versions: dict[int, dict[str, bytes]] = {}
        for rel, data in files.items():
            if rel.startswith("versions/"):
                _, vid, rest = rel.split("/", 2)
                wanted_versions.setdefault(int(vid), {})[rest] = data
        for vid in sorted(on_disk_versions):
            if wanted_versions.get(vid) != on_disk_versions[vid]:
                raise RefusedOverwriteOfSnapshot(vid)

        try:
            staging = Path(tempfile.mkdtemp(prefix=".labpack-staging-", dir=root))
        except OSError as exc:
            raise IoFailure(root, exc.strerror or str(exc)) from exc
        moved: list[tuple[Path, Path | None]] = []
        try:
            staged = {
                rel: data
                for rel, data in files.items()
                if not (rel.startswith("versions/") and int(rel.split("/", 2)[1]) in on_disk_versions)
            }
            _write_files(staging / "new", staged)
            (staging / "old").mkdir()
            for top in ("modules", "assessments"):
                current = root / top
                backup = None
                if current.exists():
                    backup = staging / "old" / top
                    os.replace(current, backup)
                moved.append((current, backup))
                if (staging / "new" / top).exists():
                    os.replace(staging / "new" / top, current)
            new_versions = staging / "new" / "versions"
            if new_versions.is_dir():
                vdir.mkdir(exist_ok=True)
                for entry in sorted(new_versions.iterdir()):
                    os.replace(entry, vdir / entry.name)
                    moved.append((vdir / entry.name, None))
            os.replace(staging / "new" / MANIFEST_FILE, root / MANIFEST_FILE)
        except OSError as exc:
            for current, backup in reversed(moved):
                if current.exists():
                    shutil.rmtree(current, ignore_errors=True)
                if backup is not None:
                    os.replace(backup, current)
            raise IoFailure(getattr(exc, "filename", None) or root, exc.strerror or str(exc)) from exc
        finally:
            shutil.rmtree(staging, ignore_errors=True)


def update_package(root: str | Path, change: Callable[[Package], Package]) -> Package:
    """Parse, apply ``change`` and write back, all under the package lock."""
    with package_lock(root):
        package = parse_package(root)
        updated = change(package)
        serialize_package(updated, root)
        return updated
