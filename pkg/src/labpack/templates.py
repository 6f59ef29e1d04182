"""Template catalog and packaging checklist.

The catalog lists every section the package template expects, with its
correlative number. Numbers containing ``n`` (``6.n.1``) are patterns that
apply once per study module (or, for ``5.n``, once per Evolution entry).

Only the Experiment-module entries and ``6.n.1`` are Mandatory. Entries for
the other modules are Recommended: the full template for them is not
published, and families are expected to extend the catalog with
:func:`load_catalog`.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable

from labpack.errors import IllegalDeletion, MalformedCatalog
from labpack.model import ModuleKind, number_key, parent_number

TRANSVERSAL = "Transversal"


class Level(str, Enum):
    MANDATORY = "mandatory"
    RECOMMENDED = "recommended"

    @classmethod
    def parse(cls, text: str) -> "Level":
        return cls(str(text).strip().lower())


class ChecklistCategory(str, Enum):
    INSTRUCTIONS_FOR_REPLICATOR = "InstructionsForReplicator"
    OPERATIONAL_MATERIAL = "OperationalMaterial"
    RESEARCH_PROCESS_SUPPORT = "ResearchProcessSupport"
    STRUCTURAL_USABILITY = "StructuralUsability"


@dataclass(frozen=True)
class TemplateEntry:
    number: str
    title: str
    level: Level
    module_kind: ModuleKind
    guidance: str = ""

    @property
    def is_pattern(self) -> bool:
        return "n" in self.number.split(".")

    def instantiate(self, study_index: int) -> str:
        """``6.n.1`` with index 2 -> ``6.2.1``."""
        return ".".join(str(study_index) if p == "n" else p for p in self.number.split("."))

    def matches(self, number: str) -> bool:
        mine = self.number.split(".")
        theirs = number.split(".")
        if len(mine) != len(theirs):
            return False
        return all(a == b or (a == "n" and b.isdigit() and int(b) >= 1) for a, b in zip(mine, theirs))

    def to_dict(self) -> dict:
        return {
            "number": self.number,
            "title": self.title,
            "level": self.level.value,
            "module_kind": self.module_kind.value,
            "guidance": self.guidance,
        }


@dataclass(frozen=True)
class ChecklistItem:
    code: str
    title: str
    category: ChecklistCategory
    components: tuple[str, ...]
    target_sections: tuple[str, ...]

    @property
    def transversal(self) -> bool:
        return TRANSVERSAL in self.target_sections

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "title": self.title,
            "category": self.category.value,
            "components": list(self.components),
            "targets": list(self.target_sections),
        }


@dataclass(frozen=True)
class TemplateCatalog:
    entries: tuple[TemplateEntry, ...]
    checklist: tuple[ChecklistItem, ...] = field(default=())

    def entry(self, number: str) -> TemplateEntry | None:
        for e in self.entries:
            if e.number == number:
                return e
        return None

    def lookup(self, number: str) -> TemplateEntry | None:
        """Entry for a concrete section number, matching patterns too."""
        exact = self.entry(number)
        if exact is not None:
            return exact
        for e in self.entries:
            if e.is_pattern and e.matches(number):
                return e
        return None

    def for_kind(self, kind: ModuleKind) -> tuple[TemplateEntry, ...]:
        return tuple(e for e in self.entries if e.module_kind is kind)

    def item(self, code: str) -> ChecklistItem | None:
        for it in self.checklist:
            if it.code == code:
                return it
        return None

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "checklist": [i.to_dict() for i in self.checklist],
        }


M = Level.MANDATORY
R = Level.RECOMMENDED
_K = ModuleKind

# (number, title, level, kind, guidance)
_BUILTIN_ENTRIES = [
    ("1.1", "Purpose of this package", R, _K.INTRODUCTION,
     "What the package is for, who is expected to use it and how it can be extended."),
    ("1.2", "Structure and navigation", R, _K.INTRODUCTION,
     "Map of the modules, the table of contents and how to move between modules."),
    ("1.3", "Contacts and communication", R, _K.INTRODUCTION,
     "Researchers to contact before and during a replication, and the expected communication points."),
    ("2.1", "Constructs and theory", R, _K.THEORY,
     "Theoretical framework behind the experiment and how results are interpreted against it."),
    ("3.1", "Training materials", R, _K.TRAINING,
     "Material used to train subjects, for students and for instructors."),
    ("4.1", "Planning", M, _K.EXPERIMENT,
     "Overview of the work a replication involves."),
    ("4.1.1", "List of replication activities", M, _K.EXPERIMENT,
     "Every activity needed to run the replication, in order, with the dependencies between activities."),
    ("4.1.2", "Estimated workload", M, _K.EXPERIMENT,
     "Expected effort per activity, in person-hours, and the resources each activity needs."),
    ("4.1.3", "General schedule", M, _K.EXPERIMENT,
     "Calendar of the replication activities."),
    ("4.2", "Study conception", M, _K.EXPERIMENT,
     "What the experiment studies and why."),
    ("4.2.1", "Objectives", M, _K.EXPERIMENT,
     "Goals and high-level attributes under study."),
    ("4.2.2", "Hypotheses and sub studies", M, _K.EXPERIMENT,
     "Hypotheses tested and any sub-studies they split into."),
    ("4.2.3", "Factors and response variables", M, _K.EXPERIMENT,
     "Factors with their levels, and the response variables with their metrics."),
    ("4.2.4", "Contextual variables", M, _K.EXPERIMENT,
     "Context characteristics that may influence results and should be recorded."),
    ("4.3", "Experimental design", M, _K.EXPERIMENT,
     "How subjects, objects and treatments are arranged."),
    ("4.3.1", "Design alternatives", M, _K.EXPERIMENT,
     "Designs that are valid for this study, including earlier ones, each referring back to the theory module."),
    ("4.3.2", "Guidelines for selecting the experimental design", M, _K.EXPERIMENT,
     "Criteria for choosing among the design alternatives given local constraints."),
    ("4.3.3", "Validation of the experimental design", M, _K.EXPERIMENT,
     "How to check a chosen or adapted design before running it."),
    ("4.4", "Operation", M, _K.EXPERIMENT,
     "Running the experimental sessions."),
    ("4.4.1", "Instructions for preparing material", M, _K.EXPERIMENT,
     "Step-by-step preparation of forms, programs and environment, with a deliverables checklist per treatment."),
    ("4.4.2", "Operating material", M, _K.EXPERIMENT,
     "The material handed to subjects, listed with its attachments."),
    ("4.4.3", "Instructions for running sessions", M, _K.EXPERIMENT,
     "Session script, including the maximum session time."),
    ("4.5", "Analysis", M, _K.EXPERIMENT,
     "From raw data to conclusions."),
    ("4.5.1", "Data collection", M, _K.EXPERIMENT,
     "Collection method, units and transformations, and the data template shared by all replications."),
    ("4.5.2", "Analysis methods", M, _K.EXPERIMENT,
     "Statistical methods and tools, with worked examples."),
    ("4.5.3", "Results interpretation", M, _K.EXPERIMENT,
     "How to read the analysis output against the hypotheses."),
    ("5.n", "Evolution entry", R, _K.EVOLUTION,
     "One entry per study: study id, core version it ran against, date and a one-line summary."),
    ("6.n.1", "Description of the replication", M, _K.REPLICATION,
     "Identification, characterization, results and lessons learned."),
    ("6.n.2", "Adapted design", R, _K.REPLICATION,
     "The design as actually run, and how it differs from the baseline."),
    ("6.n.3", "Data", R, _K.REPLICATION,
     "Resulting data set, with attachments."),
    ("6.n.4", "Notes", R, _K.REPLICATION,
     "Observations and experience from running the replication."),
    ("7.n.1", "Aggregation protocol", R, _K.AGGREGATION,
     "Protocol of the secondary study: inspection, meta-analysis or other comparison technique."),
    ("7.n.2", "Findings", R, _K.AGGREGATION,
     "Results of the secondary study."),
]

_BUILTIN_CHECKLIST = [
    ChecklistItem(
        "RP",
        "Replication plan",
        ChecklistCategory.INSTRUCTIONS_FOR_REPLICATOR,
        (
            "List of activities and dependencies",
            "Estimation of times and resources by activity",
            "Basic replication schedule",
        ),
        ("4.1",),
    ),
    ChecklistItem(
        "ST",
        "Sessions with time limit",
        ChecklistCategory.OPERATIONAL_MATERIAL,
        (
            "Maximum session time for subjects",
            "Short time limit (sessions lasting two or three hours)",
        ),
        ("4.4.3",),
    ),
    ChecklistItem(
        "RR",
        "Replication report",
        ChecklistCategory.RESEARCH_PROCESS_SUPPORT,
        (
            "Replication template: identification, characterization, results and lessons learned",
            "Modules added to the LP for each replication",
        ),
        ("6.n.1",),
    ),
    ChecklistItem(
        "NS",
        "Navigation and search",
        ChecklistCategory.STRUCTURAL_USABILITY,
        (
            "Conventional structures (index, table of contents, sections)",
            "Hyperlinks",
            "External references management",
            "Search engine",
        ),
        (TRANSVERSAL,),
    ),
]

# component of NS judged from link integrity rather than declared evidence
HYPERLINKS_COMPONENT = ("NS", 2)


def builtin_checklist() -> list[ChecklistItem]:
    return list(_BUILTIN_CHECKLIST)


def builtin_catalog() -> TemplateCatalog:
    entries = tuple(
        TemplateEntry(number, title, level, kind, guidance)
        for number, title, level, kind, guidance in _BUILTIN_ENTRIES
    )
    return TemplateCatalog(entries=entries, checklist=tuple(_BUILTIN_CHECKLIST))


# -- extension files ---------------------------------------------------------

_NUMBER_OR_PATTERN = re.compile(r"^\d+(?:\.(?:\d+|n))*$")
_CODE = re.compile(r"^[A-Z][A-Z0-9]{1,7}$")


def _elements_with_lines(text: str) -> list[tuple[int, object]]:
    """Decode a JSON array, pairing each element with its 1-based line."""
    decoder = json.JSONDecoder()
    pos = 0
    length = len(text)

    def skip_ws(i: int) -> int:
        while i < length and text[i] in " \t\r\n":
            i += 1
        return i

    def line_of(i: int) -> int:
        return text.count("\n", 0, i) + 1

    pos = skip_ws(pos)
    if pos == length:
        return []
    if text[pos] != "[":
        raise MalformedCatalog(line_of(pos), "catalog extension must be a JSON array")
    pos = skip_ws(pos + 1)
    out: list[tuple[int, object]] = []
    if pos < length and text[pos] == "]":
        pos += 1
    else:
        while True:
            start = pos
            try:
                value, pos = decoder.raw_decode(text, pos)
            except json.JSONDecodeError as exc:
                raise MalformedCatalog(exc.lineno, exc.msg) from None
            out.append((line_of(start), value))
            pos = skip_ws(pos)
            if pos < length and text[pos] == ",":
                pos = skip_ws(pos + 1)
                continue
            if pos < length and text[pos] == "]":
                pos += 1
                break
            raise MalformedCatalog(line_of(pos), "expected ',' or ']'")
    if skip_ws(pos) != length:
        raise MalformedCatalog(line_of(pos), "trailing content after the array")
    return out


def _require(obj: dict, key: str, line: int, kind=str):
    if key not in obj:
        raise MalformedCatalog(line, f"missing key {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise MalformedCatalog(line, f"key {key!r} has the wrong type")
    return value


def _entry_from(obj: dict, line: int) -> tuple[TemplateEntry, bool]:
    number = _require(obj, "number", line)
    if not _NUMBER_OR_PATTERN.match(number):
        raise MalformedCatalog(line, f"invalid section number {number!r}")
    remove = bool(obj.get("remove", False))
    title = obj.get("title", "")
    if not isinstance(title, str) or (not remove and not title.strip()):
        raise MalformedCatalog(line, f"entry {number} needs a non-empty title")
    try:
        level = Level.parse(obj.get("level", "recommended"))
    except ValueError:
        raise MalformedCatalog(line, f"entry {number} has unknown level {obj.get('level')!r}") from None
    try:
        kind = ModuleKind.parse(_require(obj, "module_kind", line)) if "module_kind" in obj or not remove else None
    except ValueError as exc:
        raise MalformedCatalog(line, str(exc)) from None
    if kind is None:
        kind = ModuleKind.from_number(int(number.split(".")[0]))
    if int(number.split(".")[0]) != kind.module_number:
        raise MalformedCatalog(line, f"entry {number} is not rooted under module {kind.module_number}")
    guidance = obj.get("guidance", "")
    if not isinstance(guidance, str):
        raise MalformedCatalog(line, f"entry {number} guidance must be text")
    return TemplateEntry(number, title, level, kind, guidance), remove


def _item_from(obj: dict, line: int) -> ChecklistItem:
    code = _require(obj, "code", line)
    if not _CODE.match(code):
        raise MalformedCatalog(line, f"invalid checklist code {code!r}")
    try:
        category = ChecklistCategory(_require(obj, "category", line))
    except ValueError:
        raise MalformedCatalog(line, f"item {code} has unknown category {obj['category']!r}") from None
    components = _require(obj, "components", line, list)
    if not components or not all(isinstance(c, str) and c.strip() for c in components):
        raise MalformedCatalog(line, f"item {code} needs a non-empty list of components")
    targets = _require(obj, "targets", line, list)
    if not all(isinstance(t, str) for t in targets):
        raise MalformedCatalog(line, f"item {code} targets must be strings")
    title = obj.get("title", code)
    return ChecklistItem(code, title, category, tuple(components), tuple(targets))


def merge_catalog(
    base: TemplateCatalog,
    entries: Iterable[tuple[TemplateEntry, bool, int]],
    items: Iterable[tuple[ChecklistItem, int]],
) -> TemplateCatalog:
    merged = {e.number: e for e in base.entries}
    builtin = {e.number: e for e in base.entries}
    for entry, remove, line in entries:
        current = merged.get(entry.number)
        if remove:
            if current is not None and current.level is Level.MANDATORY:
                raise IllegalDeletion(entry.number)
            merged.pop(entry.number, None)
            continue
        if current is None:
            merged[entry.number] = entry
            continue
        if current.level is Level.MANDATORY and entry.level is not Level.MANDATORY:
            raise IllegalDeletion(entry.number, "a Mandatory entry cannot be demoted")
        if entry.module_kind is not current.module_kind:
            raise MalformedCatalog(line, f"entry {entry.number} changes its module kind")
        if entry.number in builtin and builtin[entry.number].level is Level.MANDATORY:
            if entry.title != current.title:
                raise IllegalDeletion(entry.number, "a Mandatory entry cannot be renamed")
        merged[entry.number] = replace(
            current,
            title=entry.title,
            level=Level.MANDATORY if Level.MANDATORY in (entry.level, current.level) else entry.level,
            guidance=entry.guidance or current.guidance,
        )

    numbers = set(merged)
    for number, entry in merged.items():
        root_depth = 2 if entry.module_kind.is_study else 1
        parent = parent_number(number)
        if parent is not None and parent.count(".") + 1 > root_depth and parent not in numbers:
            raise MalformedCatalog(1, f"entry {number} has no parent entry {parent}")

    checklist = {i.code: i for i in base.checklist}
    for item, line in items:
        current = checklist.get(item.code)
        if current is None:
            checklist[item.code] = item
            continue
        if item.category is not current.category:
            raise MalformedCatalog(line, f"item {item.code} changes its category")
        components = current.components + tuple(c for c in item.components if c not in current.components)
        targets = current.target_sections + tuple(t for t in item.target_sections if t not in current.target_sections)
        checklist[item.code] = replace(current, components=components, target_sections=targets)

    for item in checklist.values():
        for target in item.target_sections:
            if target != TRANSVERSAL and target not in numbers:
                raise MalformedCatalog(1, f"item {item.code} targets unknown section {target}")

    ordered = tuple(sorted(merged.values(), key=lambda e: number_key(e.number)))
    catalog = TemplateCatalog(entries=ordered, checklist=tuple(checklist.values()))
    gaps = check_sibling_numbering(catalog)
    if gaps:
        raise MalformedCatalog(1, f"sibling numbering has gaps under {', '.join(gaps)}")
    return catalog


def load_catalog(path: str | Path, base: TemplateCatalog | None = None) -> TemplateCatalog:
    """Merge the extension file at ``path`` into ``base`` (the builtin catalog by default).

    Extensions may add entries and checklist items, raise an entry to
    Mandatory, or drop a Recommended entry with ``"remove": true``. Removing,
    demoting or renaming a Mandatory entry raises :class:`IllegalDeletion`.
    """
    base = base or builtin_catalog()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise MalformedCatalog(1, "file is not valid UTF-8") from None
    entries = []
    items = []
    for line, obj in _elements_with_lines(text):
        if not isinstance(obj, dict):
            raise MalformedCatalog(line, "each element must be an object")
        if "code" in obj:
            items.append((_item_from(obj, line), line))
        elif "number" in obj:
            entry, remove = _entry_from(obj, line)
            entries.append((entry, remove, line))
        else:
            raise MalformedCatalog(line, "element is neither a section entry nor a checklist item")
    return merge_catalog(base, entries, items)


def check_sibling_numbering(catalog: TemplateCatalog) -> list[str]:
    """Concrete entries whose sibling numbering has gaps (used by the scaffolder)."""
    problems = []
    groups: dict[str, list[int]] = {}
    for e in catalog.entries:
        if e.is_pattern:
            continue
        parent = parent_number(e.number)
        if parent is None:
            continue
        groups.setdefault(parent, []).append(int(e.number.rsplit(".", 1)[1]))
    for parent, ordinals in groups.items():
        if sorted(ordinals) != list(range(1, len(ordinals) + 1)):
            problems.append(parent)
    return problems
