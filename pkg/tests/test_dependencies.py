from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labpack.findings import FindingCode
from labpack.structure import (
    DependencyGraph,
    default_dependencies,
    strongly_connected_components,
    validate_dependencies,
)
from labpack.model import ModuleKind
from oracles import has_cycle_by_paths, nodes_on_cycles, rank_violations

NODES = ["1", "2", "3", "4", "5", "6.1"]


def codes(findings):
    return [f.code for f in findings]


def check_against_oracle(nodes, edges):
    findings = validate_dependencies(DependencyGraph(frozenset(edges), frozenset(nodes)))
    cycles = [f for f in findings if f.code is FindingCode.CYCLE_DETECTED]
    assert bool(cycles) == has_cycle_by_paths(nodes, edges), edges
    flagged = {(f.module, f.message) for f in findings if f.code is FindingCode.RANK_VIOLATION}
    assert len(flagged) == len(rank_violations(edges)), edges
    return findings


def test_spec_examples():
    assert validate_dependencies(DependencyGraph.of({("4", "2"), ("3", "4")})) == []
    assert codes(validate_dependencies(DependencyGraph.of({("2", "4")}))) == [FindingCode.RANK_VIOLATION]
    found = validate_dependencies(DependencyGraph.of({("4", "2"), ("2", "4")}))
    assert codes(found).count(FindingCode.CYCLE_DETECTED) == 1
    assert FindingCode.RANK_VIOLATION in codes(found)


def test_self_loop_is_cycle_only():
    assert codes(validate_dependencies(DependencyGraph.of({("4", "4")}))) == [FindingCode.CYCLE_DETECTED]


def test_equal_rank_is_violation():
    found = validate_dependencies(DependencyGraph.of({("3", "5")}))
    assert codes(found) == [FindingCode.RANK_VIOLATION]


def test_introduction_exempt_from_ranks_but_not_cycles():
    assert validate_dependencies(DependencyGraph.of({("1", "4"), ("2", "1")})) == []
    found = validate_dependencies(DependencyGraph.of({("1", "4"), ("4", "1")}))
    assert codes(found) == [FindingCode.CYCLE_DETECTED]


def test_one_finding_per_cyclic_component():
    edges = {("2", "4"), ("4", "2"), ("3", "5"), ("5", "3")}
    found = validate_dependencies(DependencyGraph.of(edges))
    assert codes(found).count(FindingCode.CYCLE_DETECTED) == 2


def test_default_dependencies_respect_ranks():
    edges = set()
    for kind in ModuleKind:
        node = f"{kind.module_number}.1" if kind.is_study else str(kind.module_number)
        for dep in default_dependencies(kind, ["6.1"]):
            if dep != node:
                edges.add((node, dep))
    assert validate_dependencies(DependencyGraph.of(edges)) == []


def test_scc_matches_cycle_oracle_on_long_chain():
    n = 2000
    nodes = [f"6.{i}" for i in range(1, n + 1)]
    edges = {(nodes[i], nodes[i + 1]) for i in range(n - 1)} | {(nodes[-1], nodes[0])}
    comps = strongly_connected_components(DependencyGraph.of(edges))
    assert len(comps) == 1 and len(comps[0]) == n


@pytest.mark.parametrize("size", [1, 2, 3])
def test_exhaustive_small_with_loops(size):
    for nodes in itertools.combinations(NODES, size):
        pairs = list(itertools.product(nodes, repeat=2))
        for mask in range(1 << len(pairs)):
            check_against_oracle(nodes, [p for i, p in enumerate(pairs) if mask >> i & 1])


def test_random_8_node_graphs():
    rng = random.Random(20240301)
    nodes = ["1", "2", "3", "4", "5", "6.1", "6.2", "7.1"]
    pairs = list(itertools.product(nodes, repeat=2))
    for _ in range(3000):
        density = rng.random() * 0.3
        edges = [p for p in pairs if rng.random() < density]
        check_against_oracle(nodes, edges)


@settings(max_examples=300, deadline=None)
@given(st.sets(st.tuples(st.sampled_from(NODES), st.sampled_from(NODES))))
def test_cyclic_nodes_match_oracle(edges):
    graph = DependencyGraph(frozenset(edges), frozenset(NODES))
    cyclic = set()
    for comp in strongly_connected_components(graph):
        if len(comp) > 1 or (comp[0], comp[0]) in edges:
            cyclic.update(comp)
    assert cyclic == nodes_on_cycles(NODES, edges)


@settings(max_examples=200, deadline=None)
@given(st.sets(st.tuples(st.sampled_from(NODES), st.sampled_from(NODES))))
def test_empty_iff_rank_respecting_dag(edges):
    found = validate_dependencies(DependencyGraph(frozenset(edges), frozenset(NODES)))
    ok = not has_cycle_by_paths(NODES, edges) and not rank_violations(edges)
    assert (found == []) == ok
