"""Exception hierarchy for labpack."""

from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:
    from labpack.findings import Finding
    from labpack.store import ParseDiagnostic


class LabpackError(Exception):
    """Base class for every error raised by labpack."""


# -- package store ---------------------------------------------------------


class PackageParseError(LabpackError):
    """Raised when a package tree cannot be parsed.

    Carries every diagnostic collected during the parse, not only the first.
    """

    def __init__(self, diagnostics: Sequence["ParseDiagnostic"]):
        self.diagnostics = list(diagnostics)
        lines = [d.format() for d in self.diagnostics]
        super().__init__("package could not be parsed:\n  " + "\n  ".join(lines))

    @property
    def codes(self) -> list[str]:
        return [d.code.value for d in self.diagnostics]


class IoFailure(LabpackError):
    def __init__(self, path, reason: str):
        self.path = path
        super().__init__(f"I/O failure at {path}: {reason}")


class RefusedOverwriteOfSnapshot(LabpackError):
    def __init__(self, version_id: int):
        self.version_id = version_id
        super().__init__(f"refusing to alter published snapshot v{version_id}")


# -- template registry -----------------------------------------------------


class CatalogError(LabpackError):
    pass


class MalformedCatalog(CatalogError):
    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"malformed catalog (line {line}): {reason}")


class IllegalDeletion(CatalogError):
    def __init__(self, number: str, reason: str = "normative entries cannot be removed"):
        self.number = number
        super().__init__(f"illegal deletion of {number}: {reason}")


# -- lifecycle -------------------------------------------------------------


class InvalidManifest(LabpackError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid manifest: " + "; ".join(self.problems))


class StructurallyInvalidPackage(LabpackError):
    def __init__(self, findings: Sequence["Finding"]):
        self.findings = list(findings)
        super().__init__(
            f"package has {len(self.findings)} structural finding(s); "
            + "; ".join(f.message for f in self.findings[:3])
        )


class LintErrorsPresent(LabpackError):
    def __init__(self, count: int, findings: Sequence["Finding"] = ()):
        self.count = count
        self.findings = list(findings)
        super().__init__(f"{count} lint error(s) present")


class ExportRefused(LabpackError):
    """Export stopped because intra-package links cannot be resolved."""

    def __init__(self, findings: Sequence["Finding"]):
        self.findings = list(findings)
        super().__init__(
            "export refused: " + "; ".join(f.message for f in self.findings)
        )


class UnreadableSource(LabpackError):
    def __init__(self, path, reason: str = "cannot be read"):
        self.path = path
        super().__init__(f"unreadable source {path}: {reason}")


# -- assessment ------------------------------------------------------------


class AssessmentError(LabpackError):
    pass


class UnknownCategory(AssessmentError):
    def __init__(self, category: str):
        self.category = category
        super().__init__(f"unknown incident category {category!r}")


class UnknownReplication(AssessmentError):
    def __init__(self, replication_id: str):
        self.replication_id = replication_id
        super().__init__(f"no assessment records for replication {replication_id!r}")


class EmptyPartition(AssessmentError):
    def __init__(self, which: str):
        self.which = which
        super().__init__(f"the {which} partition is empty")


class InvalidRating(AssessmentError):
    pass


class MixedChains(AssessmentError):
    def __init__(self, a, b):
        super().__init__(
            f"cannot compare {type(a).__name__}.{a.name} with {type(b).__name__}.{b.name}"
        )
