"""Structural and dependency rules for laboratory packages.

Dependency ranks (lower number = more abstract)::

    Theory 1 > Experiment 2 > Training 3, Evolution 3 > Replication 4 > Aggregation 5

An edge ``a -> b`` ("a depends on b") is allowed only when ``rank(a) > rank(b)``.
Introduction sits outside the hierarchy and is exempt from rank checks, but
still takes part in cycle detection.
"""

from __future__ import annotations

import posixpath
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from labpack.findings import Finding, FindingCode, RuleKind, RuleSource, Severity
from labpack.model import (
    CORE_KINDS,
    LPModule,
    ModuleKind,
    Package,
    Section,
    kind_of_module_id,
    number_key,
)

DEPENDENCY_RANK: dict[ModuleKind, int | None] = {
    ModuleKind.INTRODUCTION: None,
    ModuleKind.THEORY: 1,
    ModuleKind.EXPERIMENT: 2,
    ModuleKind.TRAINING: 3,
    ModuleKind.EVOLUTION: 3,
    ModuleKind.REPLICATION: 4,
    ModuleKind.AGGREGATION: 5,
}

_STRUCTURE = RuleSource(RuleKind.STRUCTURE)
_DEPENDENCY = RuleSource(RuleKind.DEPENDENCY)


def _finding(code: FindingCode, message: str, module=None, locus=None) -> Finding:
    return Finding(code, Severity.ERROR, message, _STRUCTURE, module, locus)


# -- structure ---------------------------------------------------------------


def validate_structure(package: Package) -> list[Finding]:
    """Return one finding per violated structural invariant."""
    findings: list[Finding] = []

    counts = Counter(m.kind for m in package.core_modules)
    for kind in CORE_KINDS:
        if counts[kind] == 0:
            findings.append(
                _finding(
                    FindingCode.MISSING_CORE_MODULE,
                    f"core module {kind.module_number} {kind.label} is missing",
                    module=str(kind.module_number),
                )
            )
        elif counts[kind] > 1:
            findings.append(
                _finding(
                    FindingCode.DUPLICATE_CORE_MODULE,
                    f"core module {kind.label} appears {counts[kind]} times",
                    module=str(kind.module_number),
                )
            )
    for m in package.core_modules:
        if m.kind.is_study:
            findings.append(
                _finding(
                    FindingCode.INVALID_STUDY_INDEX,
                    f"{m.kind.label} module listed among core modules",
                    module=m.number,
                )
            )

    seen: Counter = Counter()
    for m in package.study_modules:
        if not m.kind.is_study or not isinstance(m.study_index, int) or m.study_index < 1:
            findings.append(
                _finding(
                    FindingCode.INVALID_STUDY_INDEX,
                    f"study module {m.kind.label} has invalid study index {m.study_index!r}",
                    module=str(m.module_number),
                )
            )
            continue
        seen[(m.kind, m.study_index)] += 1
    for (kind, index), n in sorted(seen.items(), key=lambda kv: (kv[0][0].module_number, kv[0][1])):
        if n > 1:
            findings.append(
                _finding(
                    FindingCode.DUPLICATE_STUDY_INDEX,
                    f"{kind.label} study index {index} used {n} times",
                    module=f"{kind.module_number}.{index}",
                )
            )

    findings.extend(_evolution_findings(package))
    for m in package.modules:
        findings.extend(_section_findings(m))
        findings.extend(_attachment_findings(m))
    return findings


def _evolution_findings(package: Package) -> list[Finding]:
    evolution = package.core(ModuleKind.EVOLUTION)
    if evolution is None:
        return []
    out = []
    expected = len(package.study_modules)
    found = len(evolution.sections)
    if expected != found:
        out.append(
            _finding(
                FindingCode.EVOLUTION_OUT_OF_SYNC,
                f"Evolution has {found} entry section(s) but the package has "
                f"{expected} study module(s) (expected={expected}, found={found})",
                module=evolution.number,
            )
        )
    study_ids = {m.number for m in package.study_modules}
    for entry in evolution.entries:
        if entry.study not in study_ids:
            out.append(
                _finding(
                    FindingCode.DANGLING_EVOLUTION_ENTRY,
                    f"Evolution entry {entry.section} refers to missing study {entry.study}",
                    module=evolution.number,
                    locus=entry.section,
                )
            )
        elif evolution.section(entry.section) is None:
            out.append(
                _finding(
                    FindingCode.DANGLING_EVOLUTION_ENTRY,
                    f"Evolution entry for study {entry.study} names missing section {entry.section}",
                    module=evolution.number,
                    locus=entry.section,
                )
            )
    return out


def _section_findings(module: LPModule) -> list[Finding]:
    out = []

    def check(siblings: tuple[Section, ...], prefix: str) -> None:
        for ordinal, section in enumerate(siblings, start=1):
            expected = f"{prefix}.{ordinal}"
            if section.number != expected:
                out.append(
                    _finding(
                        FindingCode.BAD_SECTION_NUMBER,
                        f"section {section.number} should be numbered {expected}",
                        module=module.number,
                        locus=section.number,
                    )
                )
            if not section.title.strip():
                out.append(
                    _finding(
                        FindingCode.EMPTY_SECTION_TITLE,
                        f"section {section.number} has an empty title",
                        module=module.number,
                        locus=section.number,
                    )
                )
            check(section.children, section.number)

    check(module.sections, module.number)
    return out


def attachment_path_problem(path: str) -> str | None:
    """Why ``path`` is not an acceptable attachment path, or None."""
    if not path or "\\" in path or "\x00" in path:
        return "empty or contains a backslash/NUL"
    if path.startswith("/"):
        return "is absolute"
    if posixpath.normpath(path) != path:
        return "is not normalized"
    if path == ".." or path.startswith("../"):
        return "escapes the module directory"
    return None


def _attachment_findings(module: LPModule) -> list[Finding]:
    out = []
    for att in module.attachments:
        problem = attachment_path_problem(att.path)
        if problem:
            out.append(
                _finding(
                    FindingCode.INVALID_ATTACHMENT_PATH,
                    f"attachment {att.path!r} {problem}",
                    module=module.number,
                    locus=att.path,
                )
            )
    return out


# -- dependencies ------------------------------------------------------------


@dataclass(frozen=True)
class DependencyGraph:
    """Module dependency edges; ``(a, b)`` means module ``a`` depends on ``b``.

    Nodes are module ids (``"4"``, ``"6.1"``); a node's kind follows from its
    leading number.
    """

    edges: frozenset[tuple[str, str]]
    nodes: frozenset[str] = field(default=frozenset())

    def __post_init__(self):
        nodes = set(self.nodes)
        for a, b in self.edges:
            nodes.update((a, b))
        object.__setattr__(self, "nodes", frozenset(nodes))

    @classmethod
    def of(cls, edges: Iterable[tuple[str, str]], nodes: Iterable[str] = ()) -> "DependencyGraph":
        return cls(frozenset(edges), frozenset(nodes))

    def successors(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            adj[a].append(b)
        for targets in adj.values():
            targets.sort(key=number_key)
        return adj


def dependency_graph(package: Package) -> DependencyGraph:
    """Graph of declared ``depends_on`` edges that point at existing modules."""
    present = {m.number for m in package.modules}
    edges = {(m.number, d) for m in package.modules for d in m.depends_on if d in present}
    return DependencyGraph.of(edges, present)


def unknown_dependency_findings(package: Package) -> list[Finding]:
    present = {m.number for m in package.modules}
    out = []
    for m in package.modules:
        for d in m.depends_on:
            if d not in present:
                out.append(
                    Finding(
                        FindingCode.UNKNOWN_DEPENDENCY,
                        Severity.ERROR,
                        f"module {m.number} depends on {d}, which is not in the package",
                        _DEPENDENCY,
                        m.number,
                    )
                )
    return out


def strongly_connected_components(graph: DependencyGraph) -> list[list[str]]:
    """Tarjan's algorithm, iterative. Components come out in reverse topological order."""
    adj = graph.successors()
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    components: list[list[str]] = []
    counter = 0

    for root in sorted(adj, key=number_key):
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            node, i = work.pop()
            if i == 0:
                index[node] = low[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            succ = adj[node]
            if i < len(succ):
                work.append((node, i + 1))
                nxt = succ[i]
                if nxt not in index:
                    work.append((nxt, 0))
                elif nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
                continue
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                components.append(sorted(comp, key=number_key))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
    return components


def validate_dependencies(graph: DependencyGraph) -> list[Finding]:
    """Cycle and rank-order findings; empty iff the graph is a rank-respecting DAG."""
    findings = []
    for comp in strongly_connected_components(graph):
        if len(comp) > 1 or (comp[0], comp[0]) in graph.edges:
            path = " -> ".join(comp + [comp[0]])
            findings.append(
                Finding(
                    FindingCode.CYCLE_DETECTED,
                    Severity.ERROR,
                    f"dependency cycle among modules {path}",
                    _DEPENDENCY,
                    comp[0],
                )
            )
    for a, b in sorted(graph.edges, key=lambda e: (number_key(e[0]), number_key(e[1]))):
        if a == b:
            continue
        ra = DEPENDENCY_RANK[kind_of_module_id(a)]
        rb = DEPENDENCY_RANK[kind_of_module_id(b)]
        if ra is None or rb is None:
            continue
        if ra <= rb:
            findings.append(
                Finding(
                    FindingCode.RANK_VIOLATION,
                    Severity.ERROR,
                    f"module {a} ({kind_of_module_id(a).label}, rank {ra}) may not depend on "
                    f"module {b} ({kind_of_module_id(b).label}, rank {rb})",
                    _DEPENDENCY,
                    a,
                )
            )
    return findings


def default_dependencies(kind: ModuleKind, existing_replications: Iterable[str] = ()) -> tuple[str, ...]:
    """Edges the scaffolder and lifecycle ops declare for a new module."""
    if kind is ModuleKind.TRAINING:
        return ("4",)
    if kind is ModuleKind.EXPERIMENT:
        return ("2",)
    if kind is ModuleKind.EVOLUTION:
        return ("4",)
    if kind is ModuleKind.REPLICATION:
        return ("4",)
    if kind is ModuleKind.AGGREGATION:
        return ("4", *sorted(existing_replications, key=number_key))
    return ()
