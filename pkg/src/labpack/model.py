"""Domain values for laboratory packages.

Every value here is an immutable dataclass. Operations that "change" a
package return a new value built with :func:`dataclasses.replace`.

Module numbering is fixed: 1 Introduction, 2 Theory, 3 Training,
4 Experiment, 5 Evolution, 6.n Replication, 7.n Aggregation.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from functools import cached_property, lru_cache
from typing import TYPE_CHECKING, Iterable, Iterator, Mapping

from labpack._json import compact

if TYPE_CHECKING:
    from labpack.assessment import Assessment

FORMAT_VERSION = 1
SUPPORTED_FORMAT_VERSIONS = frozenset({FORMAT_VERSION})

_SLUG = re.compile(r"^[a-z0-9]+(?:-[a-z0-9]+)*$")
_LANGUAGE_TAG = re.compile(r"^[A-Za-z]{2,8}(?:-[A-Za-z0-9]{1,8})*$")
_EMAIL = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")
_NUMBER = re.compile(r"^\d+(?:\.\d+)*$")


class ModuleKind(str, Enum):
    INTRODUCTION = "introduction"
    THEORY = "theory"
    TRAINING = "training"
    EXPERIMENT = "experiment"
    EVOLUTION = "evolution"
    REPLICATION = "replication"
    AGGREGATION = "aggregation"

    @property
    def module_number(self) -> int:
        return _KIND_NUMBERS[self]

    @property
    def is_core(self) -> bool:
        return self not in STUDY_KINDS

    @property
    def is_study(self) -> bool:
        return self in STUDY_KINDS

    @property
    def label(self) -> str:
        return self.value.capitalize()

    @classmethod
    def from_number(cls, number: int) -> "ModuleKind":
        for kind, n in _KIND_NUMBERS.items():
            if n == number:
                return kind
        raise ValueError(f"no module kind has number {number}")

    @classmethod
    def parse(cls, text: str) -> "ModuleKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown module kind {text!r}") from None


_KIND_NUMBERS = {
    ModuleKind.INTRODUCTION: 1,
    ModuleKind.THEORY: 2,
    ModuleKind.TRAINING: 3,
    ModuleKind.EXPERIMENT: 4,
    ModuleKind.EVOLUTION: 5,
    ModuleKind.REPLICATION: 6,
    ModuleKind.AGGREGATION: 7,
}

CORE_KINDS = (
    ModuleKind.INTRODUCTION,
    ModuleKind.THEORY,
    ModuleKind.TRAINING,
    ModuleKind.EXPERIMENT,
    ModuleKind.EVOLUTION,
)
STUDY_KINDS = (ModuleKind.REPLICATION, ModuleKind.AGGREGATION)


# -- section numbers -------------------------------------------------------


def is_number(text: str) -> bool:
    return bool(_NUMBER.match(text))


@lru_cache(maxsize=4096)
def number_key(number: str) -> tuple:
    """Sort key for dotted numbers: numeric components compare numerically.

    Non-numeric components (the ``n`` in ``6.n.1``) sort before digits.
    """
    return tuple((0, int(p)) if p.isdigit() else (-1, p) for p in number.split("."))


def parent_number(number: str) -> str | None:
    head, sep, _ = number.rpartition(".")
    return head if sep else None


@lru_cache(maxsize=256)
def kind_of_module_id(module_id: str) -> ModuleKind:
    """``"4"`` -> Experiment, ``"6.2"`` -> Replication."""
    return ModuleKind.from_number(int(module_id.split(".", 1)[0]))


# -- values ----------------------------------------------------------------


@dataclass(frozen=True)
class Section:
    number: str
    title: str
    body: str = ""
    children: tuple["Section", ...] = ()

    def walk(self) -> Iterator["Section"]:
        """Pre-order traversal starting at this section."""
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class Attachment:
    """A file stored under a module's ``attachments/`` directory."""

    path: str
    data: bytes = field(repr=False)


@dataclass(frozen=True)
class Evidence:
    """Declared evidence that a checklist component is covered at ``locus``.

    ``component`` is the 1-based index into the item's component list;
    ``locus`` is a section number, a module id, or ``<module-id>:<attachment path>``.
    """

    item: str
    component: int
    locus: str

    def to_dict(self) -> dict:
        return {"item": self.item, "component": self.component, "locus": self.locus}


@dataclass(frozen=True)
class EvolutionEntry:
    section: str
    study: str
    core_version: int | None
    date: str
    summary: str

    def to_dict(self) -> dict:
        return {
            "section": self.section,
            "study": self.study,
            "core_version": self.core_version,
            "date": self.date,
            "summary": self.summary,
        }


@dataclass(frozen=True)
class LPModule:
    kind: ModuleKind
    study_index: int | None = None
    sections: tuple[Section, ...] = ()
    attachments: tuple[Attachment, ...] = ()
    depends_on: tuple[str, ...] = ()
    evidence: tuple[Evidence, ...] = ()
    entries: tuple[EvolutionEntry, ...] = ()
    # digest found in module.json when parsed from disk; never part of equality
    recorded_digest: str | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        # unordered collections are kept in canonical order so that equality
        # matches what serialization preserves
        object.__setattr__(self, "attachments", tuple(sorted(self.attachments, key=lambda a: a.path)))
        object.__setattr__(self, "depends_on", tuple(sorted(self.depends_on, key=number_key)))
        object.__setattr__(
            self, "evidence", tuple(sorted(self.evidence, key=lambda e: (e.item, e.component, e.locus)))
        )
        object.__setattr__(self, "entries", tuple(sorted(self.entries, key=lambda e: number_key(e.section))))

    @property
    def module_number(self) -> int:
        return self.kind.module_number

    @property
    def number(self) -> str:
        """Module id: ``"4"`` for core modules, ``"6.2"`` for studies."""
        if self.kind.is_study:
            return f"{self.module_number}.{self.study_index}"
        return str(self.module_number)

    def walk_sections(self) -> Iterator[Section]:
        for section in self.sections:
            yield from section.walk()

    @cached_property
    def _section_index(self) -> dict[str, Section]:
        index: dict[str, Section] = {}
        for section in self.walk_sections():
            index.setdefault(section.number, section)
        return index

    def section(self, number: str) -> Section | None:
        return self._section_index.get(number)

    def section_numbers(self) -> list[str]:
        return [s.number for s in self.walk_sections()]

    def attachment(self, path: str) -> Attachment | None:
        for att in self.attachments:
            if att.path == path:
                return att
        return None

    def metadata(self) -> dict:
        """module.json content, without the digest."""
        meta: dict = {
            "format_version": FORMAT_VERSION,
            "kind": self.kind.value,
            "module_number": self.module_number,
            "sections": {s.number: s.title for s in self.walk_sections()},
            "attachments": sorted(a.path for a in self.attachments),
            "depends_on": sorted(self.depends_on, key=number_key),
            "evidence": [
                e.to_dict()
                for e in sorted(
                    self.evidence, key=lambda e: (e.item, e.component, e.locus)
                )
            ],
        }
        if self.kind.is_study:
            meta["study_index"] = self.study_index
        if self.kind is ModuleKind.EVOLUTION:
            meta["entries"] = [
                e.to_dict() for e in sorted(self.entries, key=lambda e: number_key(e.section))
            ]
        return meta

    @cached_property
    def content_digest(self) -> str:
        h = hashlib.sha256()

        def frame(tag: bytes, payload: bytes) -> None:
            h.update(tag)
            h.update(len(payload).to_bytes(8, "big"))
            h.update(payload)

        frame(b"M", compact(self.metadata()).encode("utf-8"))
        for section in self.walk_sections():
            frame(b"S", compact([section.number, section.title]).encode("utf-8"))
            frame(b"B", section.body.encode("utf-8"))
        for att in sorted(self.attachments, key=lambda a: a.path):
            frame(b"P", att.path.encode("utf-8"))
            frame(b"A", att.data)
        return h.hexdigest()

    def replace_section(self, number: str, **changes) -> "LPModule":
        """Return a copy with the section ``number`` updated via ``changes``."""
        found = False

        def rebuild(sections: tuple[Section, ...]) -> tuple[Section, ...]:
            nonlocal found
            out = []
            for s in sections:
                if s.number == number:
                    found = True
                    s = replace(s, **changes)
                else:
                    s = replace(s, children=rebuild(s.children)) if s.children else s
                out.append(s)
            return tuple(out)

        sections = rebuild(self.sections)
        if not found:
            raise KeyError(number)
        return replace(self, sections=sections, recorded_digest=None)

    def without_section(self, number: str) -> "LPModule":
        """Return a copy with the section subtree rooted at ``number`` removed."""

        def rebuild(sections: tuple[Section, ...]) -> tuple[Section, ...]:
            return tuple(
                replace(s, children=rebuild(s.children))
                for s in sections
                if s.number != number
            )

        return replace(self, sections=rebuild(self.sections), recorded_digest=None)


def build_section_tree(flat: Mapping[str, tuple[str, str]]) -> tuple[Section, ...]:
    """Assemble a section forest from ``number -> (title, body)``.

    Each section hangs under its nearest present ancestor; sections without
    any present ancestor become top-level. Siblings are ordered numerically.
    Bad numbering is kept as-is so that structure validation can report it.
    """
    numbers = sorted(flat, key=number_key)
    present = set(numbers)
    children: dict[str | None, list[str]] = {}
    for number in numbers:
        parent = parent_number(number)
        while parent is not None and parent not in present:
            parent = parent_number(parent)
        children.setdefault(parent, []).append(number)

    def make(number: str) -> Section:
        title, body = flat[number]
        kids = tuple(make(c) for c in children.get(number, ()))
        return Section(number=number, title=title, body=body, children=kids)

    # top-level: parents that are not themselves sections
    roots = [n for key, group in children.items() if key not in present for n in group]
    return tuple(make(n) for n in sorted(roots, key=number_key))


def flatten_sections(sections: Iterable[Section]) -> dict[str, tuple[str, str]]:
    out: dict[str, tuple[str, str]] = {}
    for top in sections:
        for s in top.walk():
            out[s.number] = (s.title, s.body)
    return out


@dataclass(frozen=True)
class Contact:
    name: str
    email: str

    def to_dict(self) -> dict:
        return {"name": self.name, "email": self.email}


@dataclass(frozen=True)
class Manifest:
    package_id: str
    experiment_name: str
    family: str
    language_tag: str
    contacts: tuple[Contact, ...]
    created: datetime
    format_version: int = FORMAT_VERSION

    def problems(self) -> list[str]:
        """Human-readable invariant violations; empty when the manifest is valid."""
        out = []
        if not isinstance(self.package_id, str) or not _SLUG.match(self.package_id):
            out.append(f"package_id {self.package_id!r} is not a lowercase slug")
        if not str(self.experiment_name).strip():
            out.append("experiment_name is empty")
        if not _LANGUAGE_TAG.match(str(self.language_tag)):
            out.append(f"language_tag {self.language_tag!r} is not a BCP-47 style tag")
        for c in self.contacts:
            if not c.name.strip():
                out.append("contact with empty name")
            if not _EMAIL.match(c.email):
                out.append(f"contact email {c.email!r} is not valid")
        if self.created.tzinfo is None:
            out.append("created must be a UTC instant")
        if self.format_version not in SUPPORTED_FORMAT_VERSIONS:
            out.append(f"format_version {self.format_version} is not supported")
        return out


@dataclass(frozen=True)
class CoreSnapshot:
    """A published, immutable copy of the five core modules."""

    version_id: int
    timestamp: datetime
    change_note: str
    modules: tuple[LPModule, ...]
    recorded_digests: tuple[tuple[str, str], ...] | None = field(
        default=None, compare=False, repr=False
    )

    @property
    def digests(self) -> dict[str, str]:
        return {m.number: m.content_digest for m in self.modules}

    def module(self, kind: ModuleKind) -> LPModule | None:
        for m in self.modules:
            if m.kind is kind:
                return m
        return None


@dataclass(frozen=True)
class Package:
    manifest: Manifest
    core_modules: tuple[LPModule, ...]
    study_modules: tuple[LPModule, ...] = ()
    version_history: tuple[CoreSnapshot, ...] = ()
    assessments: tuple["Assessment", ...] = ()

    def __post_init__(self):
        # canonical order: by module number, then study index (stable for duplicates)
        object.__setattr__(self, "core_modules", tuple(sorted(self.core_modules, key=module_sort_key)))
        object.__setattr__(self, "study_modules", tuple(sorted(self.study_modules, key=module_sort_key)))
        object.__setattr__(self, "version_history", tuple(sorted(self.version_history, key=lambda s: s.version_id)))
        object.__setattr__(self, "assessments", tuple(sorted(self.assessments, key=lambda a: a.replication_id)))

    def core(self, kind: ModuleKind) -> LPModule | None:
        for m in self.core_modules:
            if m.kind is kind:
                return m
        return None

    @property
    def modules(self) -> tuple[LPModule, ...]:
        return self.core_modules + self.study_modules

    def module(self, module_id: str) -> LPModule | None:
        for m in self.modules:
            if m.number == module_id:
                return m
        return None

    def studies(self, kind: ModuleKind) -> tuple[LPModule, ...]:
        return tuple(m for m in self.study_modules if m.kind is kind)

    @property
    def replications(self) -> tuple[LPModule, ...]:
        return self.studies(ModuleKind.REPLICATION)

    @property
    def aggregations(self) -> tuple[LPModule, ...]:
        return self.studies(ModuleKind.AGGREGATION)

    def find_section(self, number: str) -> tuple[LPModule, Section] | None:
        for m in self.modules:
            s = m.section(number)
            if s is not None:
                return m, s
        return None

    @property
    def latest_version_id(self) -> int | None:
        if not self.version_history:
            return None
        return max(s.version_id for s in self.version_history)

    def snapshot(self, version_id: int) -> CoreSnapshot | None:
        for s in self.version_history:
            if s.version_id == version_id:
                return s
        return None

    def assessment(self, replication_id: str) -> "Assessment | None":
        for a in self.assessments:
            if a.replication_id == replication_id:
                return a
        return None

    def replace_module(self, module: LPModule) -> "Package":
        """Swap in ``module`` for the existing module with the same id."""
        if module.kind.is_core:
            mods = tuple(module if m.kind is module.kind else m for m in self.core_modules)
            return replace(self, core_modules=mods)
        mods = tuple(module if m.number == module.number else m for m in self.study_modules)
        return replace(self, study_modules=mods)


def module_sort_key(module: LPModule) -> tuple:
    return (module.module_number, module.study_index or 0)
