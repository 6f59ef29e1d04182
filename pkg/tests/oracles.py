"""Independent reference implementations used to cross-check the library."""

from __future__ import annotations

from fractions import Fraction

RANK = {"1": None, "2": 1, "3": 3, "4": 2, "5": 3, "6": 4, "7": 5}


def node_rank(node: str):
    return RANK[node.split(".")[0]]


def has_cycle_by_paths(nodes, edges) -> bool:
    """Enumerate simple paths from every node; a cycle is a path that returns to its start."""
    adj = {n: [] for n in nodes}
    for a, b in edges:
        adj[a].append(b)

    def walk(start, node, seen) -> bool:
        for nxt in adj[node]:
            if nxt == start:
                return True
            if nxt not in seen:
                seen.add(nxt)
                if walk(start, nxt, seen):
                    return True
                seen.discard(nxt)
        return False

    return any(walk(n, n, {n}) for n in nodes)


def nodes_on_cycles(nodes, edges) -> set:
    adj = {n: [] for n in nodes}
    for a, b in edges:
        adj[a].append(b)
    out = set()
    for start in nodes:
        stack, seen = [start], set()
        while stack:
            node = stack.pop()
            for nxt in adj[node]:
                if nxt == start:
                    out.add(start)
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
    return out


def rank_violations(edges) -> set:
    out = set()
    for a, b in edges:
        if a == b:
            continue
        ra, rb = node_rank(a), node_rank(b)
        if ra is None or rb is None:
            continue
        if not ra > rb:
            out.add((a, b))
    return out


def mean(values) -> Fraction:
    values = [Fraction(str(v)) for v in values]
    return sum(values, Fraction(0)) / len(values)


def half_up_1dp(x: Fraction) -> str:
    """Textbook rounding to one decimal, done on integers."""
    tenths = x * 10
    q, r = divmod(tenths.numerator, tenths.denominator)
    if 2 * r >= tenths.denominator:
        q += 1
    return f"{q // 10}.{q % 10}"
