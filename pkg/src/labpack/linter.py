"""Package linting: template completeness, checklist conformance, versioning.

A section counts as present when it exists and its body, with HTML comments
removed, holds at least one non-whitespace character. Scaffolded sections
carry their guidance as an HTML comment, so they start out absent.

Intra-package cross-references are Markdown links with an ``lp:`` target,
e.g. ``[design alternatives](lp:4.3.1)``. A target is a section number or a
module id.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

from labpack import _json
from labpack.findings import (
    Finding,
    FindingCode,
    RuleKind,
    RuleSource,
    Severity,
    sort_findings,
)
from labpack.model import CORE_KINDS, ModuleKind, Package, Section, number_key
from labpack.structure import (
    dependency_graph,
    unknown_dependency_findings,
    validate_dependencies,
    validate_structure,
)
from labpack.templates import (
    HYPERLINKS_COMPONENT,
    TRANSVERSAL,
    ChecklistItem,
    Level,
    TemplateCatalog,
    TemplateEntry,
    builtin_catalog,
)

_COMMENT = re.compile(r"<!--.*?-->", re.DOTALL)
_LP_LINK = re.compile(r"\]\(lp:([^)\s]*)\)")


def strip_comments(text: str) -> str:
    return _COMMENT.sub("", text)


def has_content(section: Section | None) -> bool:
    return section is not None and bool(strip_comments(section.body).strip())


class ChecklistStatus(str, Enum):
    SATISFIED = "Satisfied"
    PARTIALLY_SATISFIED = "PartiallySatisfied"
    UNSATISFIED = "Unsatisfied"


@dataclass(frozen=True)
class LintReport:
    findings: tuple[Finding, ...]
    completeness: Fraction | None = None
    checklist: dict[str, ChecklistStatus] = field(default_factory=dict, hash=False)

    @property
    def completeness_ratio(self) -> float | None:
        return None if self.completeness is None else float(self.completeness)

    @property
    def counts(self) -> dict[str, int]:
        out = {s.value: 0 for s in Severity}
        for f in self.findings:
            out[f.severity.value] += 1
        return out

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.ERROR]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.WARNING]

    def by_rule(self, kind: RuleKind) -> list[Finding]:
        return [f for f in self.findings if f.rule_source.kind is kind]

    def to_dict(self) -> dict:
        return {
            "findings": [f.to_dict() for f in self.findings],
            "counts": self.counts,
            "completeness_ratio": self.completeness_ratio,
            "checklist": {code: status.value for code, status in sorted(self.checklist.items())},
        }

    def dumps(self) -> str:
        return _json.dumps(self.to_dict())

    def render_text(self) -> str:
        lines = [f.format() for f in self.findings]
        c = self.counts
        summary = f"{c['error']} error(s), {c['warning']} warning(s), {c['info']} info"
        if self.completeness is not None:
            summary += f"; completeness {self.completeness_ratio:.1%}"
        lines.append(summary)
        for code, status in sorted(self.checklist.items()):
            lines.append(f"checklist {code}: {status.value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def combine(cls, *reports: "LintReport") -> "LintReport":
        findings: list[Finding] = []
        completeness = None
        checklist: dict[str, ChecklistStatus] = {}
        for r in reports:
            findings.extend(r.findings)
            if r.completeness is not None:
                completeness = r.completeness
            checklist.update(r.checklist)
        return cls(tuple(sort_findings(findings)), completeness, checklist)


# -- completeness ------------------------------------------------------------


@dataclass(frozen=True)
class ApplicableEntry:
    number: str  # concrete section number
    entry: TemplateEntry
    module: str  # module id the section belongs to


def applicable_entries(package: Package, catalog: TemplateCatalog) -> list[ApplicableEntry]:
    """Catalog entries that apply to this package, with patterns instantiated.

    Study patterns (``6.n.1``) apply once per study module of that kind;
    Evolution patterns (``5.n``) apply once per study module in the package.
    """
    out = []
    study_count = len(package.study_modules)
    for entry in catalog.entries:
        kind = entry.module_kind
        if not entry.is_pattern:
            if kind.is_core:
                out.append(ApplicableEntry(entry.number, entry, str(kind.module_number)))
            else:
                module_id = ".".join(entry.number.split(".")[:2])
                if package.module(module_id) is not None:
                    out.append(ApplicableEntry(entry.number, entry, module_id))
            continue
        if kind.is_study:
            for m in package.studies(kind):
                out.append(ApplicableEntry(entry.instantiate(m.study_index), entry, m.number))
        elif kind is ModuleKind.EVOLUTION:
            for n in range(1, study_count + 1):
                out.append(ApplicableEntry(entry.instantiate(n), entry, str(kind.module_number)))
    out.sort(key=lambda a: number_key(a.number))
    return out


def _section_in(package: Package, module_id: str, number: str) -> Section | None:
    module = package.module(module_id)
    return module.section(number) if module is not None else None


def check_completeness(package: Package, catalog: TemplateCatalog | None = None) -> LintReport:
    catalog = catalog or builtin_catalog()
    findings = []
    mandatory = satisfied = 0
    for app in applicable_entries(package, catalog):
        present = has_content(_section_in(package, app.module, app.number))
        if app.entry.level is Level.MANDATORY:
            mandatory += 1
            satisfied += present
        if present:
            continue
        is_mandatory = app.entry.level is Level.MANDATORY
        findings.append(
            Finding(
                FindingCode.MISSING_MANDATORY_SECTION if is_mandatory else FindingCode.MISSING_RECOMMENDED_SECTION,
                Severity.ERROR if is_mandatory else Severity.WARNING,
                f"{app.number} {app.entry.title} is missing or empty",
                RuleSource(RuleKind.TEMPLATE, app.number),
                app.module,
                app.number,
            )
        )
    ratio = Fraction(satisfied, mandatory) if mandatory else Fraction(1)
    return LintReport(tuple(sort_findings(findings)), ratio)


# -- cross references --------------------------------------------------------


@dataclass(frozen=True)
class CrossReference:
    module: str
    section: str
    target: str


def cross_references(package: Package) -> list[CrossReference]:
    refs = []
    for m in package.modules:
        for s in m.walk_sections():
            for target in _LP_LINK.findall(strip_comments(s.body)):
                refs.append(CrossReference(m.number, s.number, target))
    return refs


def resolves(package: Package, target: str) -> bool:
    if not target:
        return False
    return package.find_section(target) is not None or package.module(target) is not None


def broken_references(package: Package) -> list[CrossReference]:
    return [r for r in cross_references(package) if not resolves(package, r.target)]


# -- checklist ---------------------------------------------------------------


def _evidence_resolves(package: Package, locus: str) -> bool:
    if ":" in locus:
        module_id, _, path = locus.partition(":")
        module = package.module(module_id)
        return module is not None and module.attachment(path) is not None
    found = package.find_section(locus)
    if found is not None:
        return has_content(found[1])
    return package.module(locus) is not None


def _target_instances(package: Package, target: str) -> list[tuple[str, str]]:
    """(module id, concrete section) pairs a checklist target refers to."""
    parts = target.split(".")
    if "n" not in parts:
        module_id = parts[0]
        if int(parts[0]) in (6, 7):
            module_id = ".".join(parts[:2])
        return [(module_id, target)]
    kind = ModuleKind.from_number(int(parts[0]))
    pattern = TemplateEntry(target, "", Level.MANDATORY, kind)
    if kind.is_study:
        return [(m.number, pattern.instantiate(m.study_index)) for m in package.studies(kind)]
    return [
        (str(kind.module_number), pattern.instantiate(n))
        for n in range(1, len(package.study_modules) + 1)
    ]


def evaluate_item(package: Package, item: ChecklistItem) -> tuple[ChecklistStatus, list[Finding]]:
    source = RuleSource(RuleKind.CHECKLIST, item.code)
    findings: list[Finding] = []

    def warn(code: FindingCode, message: str, module=None, locus=None) -> None:
        findings.append(Finding(code, Severity.WARNING, message, source, module, locus))

    anchor_missing: list[tuple[str, str]] = []
    for target in item.target_sections:
        if target == TRANSVERSAL:
            continue
        for module_id, number in _target_instances(package, target):
            if not has_content(_section_in(package, module_id, number)):
                anchor_missing.append((module_id, number))

    refs = cross_references(package)
    broken = [r for r in refs if not resolves(package, r.target)]
    links_ok = bool(refs) and not broken
    if item.transversal and (not refs or len(broken) == len(refs)):
        anchor_missing.append(("", "cross-references"))

    declared = {}
    for m in package.modules:
        for ev in m.evidence:
            if ev.item == item.code:
                declared.setdefault(ev.component, []).append((m.number, ev.locus))

    satisfied = []
    for index, component in enumerate(item.components, start=1):
        if (item.code, index) == HYPERLINKS_COMPONENT:
            satisfied.append(links_ok)
            continue
        satisfied.append(any(_evidence_resolves(package, locus) for _, locus in declared.get(index, [])))

    for r in broken:
        if item.transversal:
            warn(
                FindingCode.BROKEN_CROSS_REFERENCE,
                f"link to lp:{r.target} in section {r.section} does not resolve",
                r.module,
                r.section,
            )

    if anchor_missing:
        status = ChecklistStatus.UNSATISFIED
    elif all(satisfied):
        status = ChecklistStatus.SATISFIED
    elif not any(satisfied):
        status = ChecklistStatus.UNSATISFIED
    else:
        status = ChecklistStatus.PARTIALLY_SATISFIED

    if status is ChecklistStatus.UNSATISFIED:
        if anchor_missing:
            module_id, number = anchor_missing[0]
            what = "has no working cross-references" if number == "cross-references" else f"anchor section {number} is missing or empty"
            warn(
                FindingCode.CHECKLIST_UNSATISFIED,
                f"{item.code} {item.title} is unsatisfied: {what}",
                module_id or None,
                None if number == "cross-references" else number,
            )
        else:
            warn(
                FindingCode.CHECKLIST_UNSATISFIED,
                f"{item.code} {item.title} is unsatisfied: no component has resolving evidence",
            )
    elif status is ChecklistStatus.PARTIALLY_SATISFIED:
        for index, (component, ok) in enumerate(zip(item.components, satisfied), start=1):
            if ok or (item.code, index) == HYPERLINKS_COMPONENT:
                continue
            warn(
                FindingCode.CHECKLIST_COMPONENT_MISSING,
                f"{item.code} component {index} ({component}) has no resolving evidence",
            )
    return status, findings


def evaluate_checklist(package: Package, items: Sequence[ChecklistItem] | None = None) -> LintReport:
    if items is None:
        items = builtin_catalog().checklist
    findings = []
    statuses = {}
    for item in items:
        status, item_findings = evaluate_item(package, item)
        statuses[item.code] = status
        findings.extend(item_findings)
    return LintReport(tuple(sort_findings(findings)), None, statuses)


# -- versioning --------------------------------------------------------------


def check_versions(package: Package) -> list[Finding]:
    source = RuleSource(RuleKind.VERSIONING)
    out = []
    for m in package.study_modules:
        if m.recorded_digest is not None and m.recorded_digest != m.content_digest:
            out.append(
                Finding(
                    FindingCode.STUDY_MODULE_MODIFIED,
                    Severity.ERROR,
                    f"study module {m.number} changed after it was added (digest mismatch)",
                    source,
                    m.number,
                )
            )
    for m in package.core_modules:
        if m.recorded_digest is not None and m.recorded_digest != m.content_digest:
            out.append(
                Finding(
                    FindingCode.STALE_DIGEST,
                    Severity.INFO,
                    f"module {m.number} was edited; its recorded digest will be refreshed on next write",
                    source,
                    m.number,
                )
            )
    ids = sorted(s.version_id for s in package.version_history)
    if ids != list(range(1, len(ids) + 1)):
        out.append(
            Finding(
                FindingCode.VERSION_SEQUENCE_BROKEN,
                Severity.ERROR,
                f"core versions are {ids}, expected 1..{len(ids)}",
                source,
            )
        )
    for snap in package.version_history:
        kinds = sorted(m.kind.module_number for m in snap.modules)
        if kinds != [k.module_number for k in CORE_KINDS]:
            out.append(
                Finding(
                    FindingCode.SNAPSHOT_CORRUPTED,
                    Severity.ERROR,
                    f"snapshot v{snap.version_id} does not hold exactly the five core modules",
                    source,
                    locus=f"versions/{snap.version_id}",
                )
            )
        if snap.recorded_digests is not None and dict(snap.recorded_digests) != snap.digests:
            out.append(
                Finding(
                    FindingCode.SNAPSHOT_CORRUPTED,
                    Severity.ERROR,
                    f"snapshot v{snap.version_id} content does not match its recorded digests",
                    source,
                    locus=f"versions/{snap.version_id}",
                )
            )
        for m in snap.modules:
            if m.recorded_digest is not None and m.recorded_digest != m.content_digest:
                out.append(
                    Finding(
                        FindingCode.SNAPSHOT_CORRUPTED,
                        Severity.ERROR,
                        f"module {m.number} in snapshot v{snap.version_id} was modified",
                        source,
                        locus=f"versions/{snap.version_id}",
                    )
                )
    evolution = package.core(ModuleKind.EVOLUTION)
    if evolution is not None:
        known = set(ids)
        for entry in evolution.entries:
            if entry.core_version is not None and entry.core_version not in known:
                out.append(
                    Finding(
                        FindingCode.UNKNOWN_CORE_VERSION,
                        Severity.ERROR,
                        f"Evolution entry {entry.section} cites unknown core version {entry.core_version}",
                        source,
                        evolution.number,
                        entry.section,
                    )
                )
    return out


# -- composition -------------------------------------------------------------


def lint(
    package: Package,
    catalog: TemplateCatalog | None = None,
    items: Sequence[ChecklistItem] | None = None,
) -> LintReport:
    catalog = catalog or builtin_catalog()
    if items is None:
        items = catalog.checklist
    structure = validate_structure(package)
    dependencies = unknown_dependency_findings(package) + validate_dependencies(dependency_graph(package))
    return LintReport.combine(
        LintReport(tuple(structure)),
        LintReport(tuple(dependencies)),
        check_completeness(package, catalog),
        evaluate_checklist(package, items),
        LintReport(tuple(check_versions(package))),
    )


def core_errors(report: LintReport) -> list[Finding]:
    """Errors that concern the core modules or the package as a whole."""
    core_ids = {str(k.module_number) for k in CORE_KINDS}
    return [f for f in report.errors if f.module is None or f.module in core_ids]
