"""Instantiating a package and evolving it over time.

Every operation is a pure function from Package to Package; persistence and
locking are the caller's business (see ``labpack.store.update_package``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Iterable

from labpack import _json
from labpack.errors import InvalidManifest, LintErrorsPresent, StructurallyInvalidPackage, UnreadableSource
from labpack.findings import Severity
from labpack.linter import applicable_entries, core_errors, has_content, lint
from labpack.model import (
    CORE_KINDS,
    Attachment,
    CoreSnapshot,
    Evidence,
    EvolutionEntry,
    LPModule,
    Manifest,
    ModuleKind,
    Package,
    Section,
    build_section_tree,
    flatten_sections,
    number_key,
)
from labpack.structure import default_dependencies, validate_structure
from labpack.templates import Level, TemplateCatalog, TemplateEntry, builtin_catalog


def guidance_comment(entry: TemplateEntry) -> str:
    text = (entry.guidance or entry.title).replace("--", "- -")
    return f"<!-- {text} -->\n"


# -- scaffolding -------------------------------------------------------------


def scaffold_init(manifest: Manifest, catalog: TemplateCatalog | None = None) -> Package:
    """Skeleton package: the five core modules with every catalog section, all empty."""
    problems = manifest.problems()
    if problems:
        raise InvalidManifest(problems)
    catalog = catalog or builtin_catalog()
    modules = []
    for kind in CORE_KINDS:
        flat = {
            e.number: (e.title, guidance_comment(e))
            for e in catalog.for_kind(kind)
            if not e.is_pattern
        }
        modules.append(
            LPModule(
                kind=kind,
                sections=build_section_tree(flat),
                depends_on=default_dependencies(kind),
            )
        )
    return Package(manifest=manifest, core_modules=tuple(modules))


# -- gathering existing documents --------------------------------------------


class Confidence(str, Enum):
    EXACT = "Exact"
    HEURISTIC = "Heuristic"
    UNMAPPED = "Unmapped"


@dataclass(frozen=True)
class Assignment:
    source: str
    section: str | None
    confidence: Confidence

    def to_dict(self) -> dict:
        return {"source": self.source, "section": self.section, "confidence": self.confidence.value}


@dataclass(frozen=True)
class GatherMapping:
    assignments: tuple[Assignment, ...]

    def to_dict(self) -> dict:
        return {"assignments": [a.to_dict() for a in self.assignments]}

    def dumps(self) -> str:
        return _json.dumps(self.to_dict())

    def render_text(self) -> str:
        lines = [
            f"{a.confidence.value:9} {a.section or '-':8} {a.source}" for a in self.assignments
        ]
        return "\n".join(lines) + "\n" if lines else "no sources\n"


HEURISTIC_MIN_OVERLAP = 2

STOPWORDS = frozenset(
    "a an and as at by for from in into is it of on or the this to with".split()
)
_NUMBER_PREFIX = re.compile(r"^(\d+(?:\.\d+)+)(?=[-_ .]|$)")
_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def _stem(token: str) -> str:
    if len(token) > 4 and token.endswith("ies"):
        return token[:-3] + "y"
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token


def title_tokens(text: str) -> set[str]:
    return {
        _stem(t)
        for t in _TOKEN_SPLIT.split(text.lower())
        if t and t not in STOPWORDS and not t.isdigit()
    }


def _first_heading(data: bytes) -> str:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        return ""
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("#"):
            return stripped.lstrip("#").strip()
    return ""


def _read_source(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise UnreadableSource(path, exc.strerror or str(exc)) from exc


def classify_source(name: str, data: bytes, catalog: TemplateCatalog) -> tuple[str | None, Confidence]:
    m = _NUMBER_PREFIX.match(Path(name).name)
    if m:
        number = m.group(1)
        if catalog.entry(number) is not None:
            return number, Confidence.EXACT
    tokens = title_tokens(Path(name).stem) | title_tokens(_first_heading(data))
    best: tuple[int, tuple, str] | None = None
    for entry in catalog.entries:
        if entry.is_pattern:
            continue
        overlap = len(tokens & title_tokens(entry.title))
        if overlap < HEURISTIC_MIN_OVERLAP:
            continue
        key = (-overlap, number_key(entry.number), entry.number)
        if best is None or key < best:
            best = key
    if best is None:
        return None, Confidence.UNMAPPED
    return best[2], Confidence.HEURISTIC


def gather_documents(sources: Iterable[str | Path], catalog: TemplateCatalog | None = None) -> GatherMapping:
    """Propose a section for every source file; no file is ever left out."""
    catalog = catalog or builtin_catalog()
    assignments = []
    for src in sources:
        path = Path(src)
        data = _read_source(path)
        section, confidence = classify_source(path.name, data, catalog)
        assignments.append(Assignment(str(src), section, confidence))
    return GatherMapping(tuple(assignments))


def _module_for_section(package: Package, number: str) -> LPModule | None:
    head = number.split(".")
    if int(head[0]) in (6, 7):
        return package.module(".".join(head[:2]))
    return package.module(head[0])


def _set_section(module: LPModule, number: str, title: str, body: str) -> LPModule:
    flat = flatten_sections(module.sections)
    flat[number] = (flat.get(number, (title, ""))[0], body)
    return replace(module, sections=build_section_tree(flat), recorded_digest=None)


def apply_gathered(
    package: Package,
    mapping: GatherMapping,
    catalog: TemplateCatalog | None = None,
    accept_heuristics: bool | Iterable[str] = False,
) -> tuple[Package, list[Assignment]]:
    """Copy mapped sources into their sections.

    Exact assignments are always applied. Heuristic ones only when
    ``accept_heuristics`` is True or names the source. Text sources replace
    an empty body (or are appended to existing content); binary sources are
    attached to the module and linked from the section. Returns the new
    package and the assignments that were applied.
    """
    catalog = catalog or builtin_catalog()
    accepted = accept_heuristics if isinstance(accept_heuristics, bool) else set(map(str, accept_heuristics))
    applied = []
    for a in mapping.assignments:
        if a.section is None or a.confidence is Confidence.UNMAPPED:
            continue
        if a.confidence is Confidence.HEURISTIC and not (accepted is True or (isinstance(accepted, set) and a.source in accepted)):
            continue
        module = _module_for_section(package, a.section)
        entry = catalog.lookup(a.section)
        if module is None or entry is None:
            continue
        data = _read_source(Path(a.source))
        existing = module.section(a.section)
        current = existing.body if existing is not None and has_content(existing) else ""
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            rel = f"gathered/{Path(a.source).name}"
            module = replace(
                module,
                attachments=tuple(x for x in module.attachments if x.path != rel) + (Attachment(rel, data),),
            )
            text = f"See attachment [{Path(a.source).name}]({rel}).\n"
        body = text if not current else current.rstrip("\n") + "\n\n" + text
        module = _set_section(module, a.section, entry.title, body)
        package = package.replace_module(module)
        applied.append(a)
    return package, applied


# -- missing components ------------------------------------------------------


@dataclass(frozen=True)
class MissingComponent:
    number: str
    title: str
    level: Level

    def to_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "level": self.level.value}


@dataclass(frozen=True)
class MissingComponentsList:
    entries: tuple[MissingComponent, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def to_dict(self) -> dict:
        return {"missing": [e.to_dict() for e in self.entries]}

    def dumps(self) -> str:
        return _json.dumps(self.to_dict())

    def render_text(self) -> str:
        if not self.entries:
            return "nothing missing\n"
        return "".join(f"{e.number:10} {e.level.value:12} {e.title}\n" for e in self.entries)


def missing_components(package: Package, catalog: TemplateCatalog | None = None) -> MissingComponentsList:
    catalog = catalog or builtin_catalog()
    out = []
    for app in applicable_entries(package, catalog):
        module = package.module(app.module)
        section = module.section(app.number) if module is not None else None
        if not has_content(section):
            out.append(MissingComponent(app.number, app.entry.title, app.entry.level))
    return MissingComponentsList(tuple(out))


# -- studies -----------------------------------------------------------------


@dataclass(frozen=True)
class ReplicationReport:
    description: str
    adapted_design: str = ""
    data: str = ""
    notes: str = ""
    summary: str = ""
    attachments: tuple[Attachment, ...] = ()


@dataclass(frozen=True)
class AggregationReport:
    protocol: str
    results: str = ""
    summary: str = ""
    attachments: tuple[Attachment, ...] = ()


def _require_valid(package: Package) -> None:
    errors = [f for f in validate_structure(package) if f.severity is Severity.ERROR]
    if errors:
        raise StructurallyInvalidPackage(errors)


def _next_index(package: Package, kind: ModuleKind) -> int:
    return max((m.study_index for m in package.studies(kind)), default=0) + 1


def _study_sections(catalog: TemplateCatalog, kind: ModuleKind, index: int, bodies: dict[str, str]) -> tuple[Section, ...]:
    flat = {}
    for entry in catalog.for_kind(kind):
        if not entry.is_pattern:
            continue
        number = entry.instantiate(index)
        body = bodies.get(entry.number, "")
        flat[number] = (entry.title, body if body.strip() else guidance_comment(entry))
    return build_section_tree(flat)


def _add_study(
    package: Package,
    module: LPModule,
    summary: str,
    now: datetime | None,
) -> Package:
    module = replace(module, recorded_digest=module.content_digest)
    evolution = package.core(ModuleKind.EVOLUTION)
    position = len(evolution.sections) + 1
    section_number = f"{evolution.number}.{position}"
    version = package.latest_version_id
    date = (now or _json.utcnow()).date().isoformat()
    summary = " ".join(summary.split()) or f"{module.kind.label} {module.number} added"
    against = f"core version {version}" if version is not None else "the unpublished core"
    body = f"Study {module.number} ({module.kind.label.lower()}) ran against {against} on {date}.\n\n{summary}\n"
    evolution = replace(
        evolution,
        sections=evolution.sections + (Section(section_number, f"{module.kind.label} {module.number}", body),),
        entries=evolution.entries + (EvolutionEntry(section_number, module.number, version, date, summary),),
        recorded_digest=None,
    )
    package = package.replace_module(evolution)
    return replace(package, study_modules=package.study_modules + (module,))


def add_replication(
    package: Package,
    report: ReplicationReport,
    catalog: TemplateCatalog | None = None,
    now: datetime | None = None,
) -> Package:
    _require_valid(package)
    catalog = catalog or builtin_catalog()
    kind = ModuleKind.REPLICATION
    n = _next_index(package, kind)
    bodies = {"6.n.1": report.description, "6.n.2": report.adapted_design, "6.n.3": report.data, "6.n.4": report.notes}
    module = LPModule(
        kind=kind,
        study_index=n,
        sections=_study_sections(catalog, kind, n, bodies),
        attachments=tuple(report.attachments),
        depends_on=default_dependencies(kind),
        evidence=(Evidence("RR", 1, f"6.{n}.1"), Evidence("RR", 2, f"6.{n}")),
    )
    return _add_study(package, module, report.summary, now)


def add_aggregation(
    package: Package,
    report: AggregationReport,
    catalog: TemplateCatalog | None = None,
    now: datetime | None = None,
) -> Package:
    _require_valid(package)
    catalog = catalog or builtin_catalog()
    kind = ModuleKind.AGGREGATION
    n = _next_index(package, kind)
    module = LPModule(
        kind=kind,
        study_index=n,
        sections=_study_sections(catalog, kind, n, {"7.n.1": report.protocol, "7.n.2": report.results}),
        attachments=tuple(report.attachments),
        depends_on=default_dependencies(kind, (m.number for m in package.replications)),
    )
    return _add_study(package, module, report.summary, now)


# -- core versions -----------------------------------------------------------


def publish_core_version(
    package: Package,
    change_note: str,
    catalog: TemplateCatalog | None = None,
    now: datetime | None = None,
) -> Package:
    """Freeze the current core modules as the next numbered version."""
    errors = core_errors(lint(package, catalog))
    if errors:
        raise LintErrorsPresent(len(errors), errors)
    modules = tuple(replace(m, recorded_digest=m.content_digest) for m in package.core_modules)
    snapshot = CoreSnapshot(
        version_id=(package.latest_version_id or 0) + 1,
        timestamp=now or _json.utcnow(),
        change_note=change_note,
        modules=modules,
        recorded_digests=tuple(sorted((m.number, m.content_digest) for m in modules)),
    )
    return replace(package, version_history=package.version_history + (snapshot,))


def core_diff(package: Package, older: int, newer: int | None = None) -> dict[str, tuple[str | None, str | None]]:
    """Modules whose digest differs between two versions (``newer=None``: working copy)."""
    a = package.snapshot(older)
    if a is None:
        raise KeyError(older)
    if newer is None:
        b_digests = {m.number: m.content_digest for m in package.core_modules}
    else:
        b = package.snapshot(newer)
        if b is None:
            raise KeyError(newer)
        b_digests = b.digests
    a_digests = a.digests
    return {
        k: (a_digests.get(k), b_digests.get(k))
        for k in sorted(set(a_digests) | set(b_digests), key=number_key)
        if a_digests.get(k) != b_digests.get(k)
    }
