"""Laboratory packages for software engineering experiments."""

from labpack.errors import LabpackError
from labpack.linter import LintReport, check_completeness, evaluate_checklist, lint
from labpack.lifecycle import (
    AggregationReport,
    ReplicationReport,
    add_aggregation,
    add_replication,
    gather_documents,
    missing_components,
    publish_core_version,
    scaffold_init,
)
from labpack.model import LPModule, Manifest, ModuleKind, Package, Section
from labpack.store import parse_package, serialize_package
from labpack.structure import validate_dependencies, validate_structure
from labpack.templates import builtin_catalog, load_catalog

__all__ = [
    "AggregationReport",
    "LPModule",
    "LabpackError",
    "LintReport",
    "Manifest",
    "ModuleKind",
    "Package",
    "ReplicationReport",
    "Section",
    "add_aggregation",
    "add_replication",
    "builtin_catalog",
    "check_completeness",
    "evaluate_checklist",
    "gather_documents",
    "lint",
    "load_catalog",
    "missing_components",
    "parse_package",
    "publish_core_version",
    "scaffold_init",
    "serialize_package",
    "validate_dependencies",
    "validate_structure",
]
