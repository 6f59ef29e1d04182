"""Findings: the common currency of structure checks and the linter."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from labpack.model import number_key


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"

    @property
    def rank(self) -> int:
        return _SEVERITY_RANK[self]


_SEVERITY_RANK = {Severity.ERROR: 0, Severity.WARNING: 1, Severity.INFO: 2}


class RuleKind(str, Enum):
    TEMPLATE = "template"
    CHECKLIST = "checklist"
    STRUCTURE = "structure"
    DEPENDENCY = "dependency"
    VERSIONING = "versioning"


class FindingCode(str, Enum):
    # structure
    MISSING_CORE_MODULE = "MissingCoreModule"
    DUPLICATE_CORE_MODULE = "DuplicateCoreModule"
    DUPLICATE_STUDY_INDEX = "DuplicateStudyIndex"
    INVALID_STUDY_INDEX = "InvalidStudyIndex"
    EVOLUTION_OUT_OF_SYNC = "EvolutionOutOfSync"
    DANGLING_EVOLUTION_ENTRY = "DanglingEvolutionEntry"
    BAD_SECTION_NUMBER = "BadSectionNumber"
    EMPTY_SECTION_TITLE = "EmptySectionTitle"
    INVALID_ATTACHMENT_PATH = "InvalidAttachmentPath"
    # dependency
    CYCLE_DETECTED = "CycleDetected"
    RANK_VIOLATION = "RankViolation"
    UNKNOWN_DEPENDENCY = "UnknownDependency"
    # template
    MISSING_MANDATORY_SECTION = "MissingMandatorySection"
    MISSING_RECOMMENDED_SECTION = "MissingRecommendedSection"
    # checklist
    CHECKLIST_UNSATISFIED = "ChecklistUnsatisfied"
    CHECKLIST_COMPONENT_MISSING = "ChecklistComponentMissing"
    BROKEN_CROSS_REFERENCE = "BrokenCrossReference"
    # versioning
    STUDY_MODULE_MODIFIED = "StudyModuleModified"
    SNAPSHOT_CORRUPTED = "SnapshotCorrupted"
    VERSION_SEQUENCE_BROKEN = "VersionSequenceBroken"
    UNKNOWN_CORE_VERSION = "UnknownCoreVersion"
    STALE_DIGEST = "StaleDigest"


@dataclass(frozen=True)
class RuleSource:
    kind: RuleKind
    ref: str | None = None  # section number for Template, item code for Checklist

    def __str__(self) -> str:
        return f"{self.kind.value}({self.ref})" if self.ref else self.kind.value

    @property
    def transversal(self) -> bool:
        return self.kind is RuleKind.CHECKLIST and self.ref == "NS"


@dataclass(frozen=True)
class Finding:
    code: FindingCode
    severity: Severity
    message: str
    rule_source: RuleSource
    module: str | None = None  # module id, e.g. "4" or "6.1"
    locus: str | None = None  # section number or path inside the module

    def __post_init__(self):
        if not self.message:
            raise ValueError("finding message must be non-empty")

    def sort_key(self) -> tuple:
        return (
            self.severity.rank,
            number_key(self.module) if self.module else (),
            number_key(self.locus) if self.locus and self.locus[0].isdigit() else (),
            self.locus or "",
            self.code.value,
            self.message,
        )

    def to_dict(self) -> dict:
        return {
            "code": self.code.value,
            "severity": self.severity.value,
            "module": self.module,
            "locus": self.locus,
            "message": self.message,
            "rule_source": str(self.rule_source),
        }

    def format(self) -> str:
        where = self.module or "package"
        if self.locus:
            where += f" {self.locus}"
        return f"{self.severity.value.upper():7} [{where}] {self.code.value}: {self.message} ({self.rule_source})"


def sort_findings(findings) -> list[Finding]:
    return sorted(findings, key=Finding.sort_key)
