"""VInf requests and their expansion with backups and redundant links.

Expanding a VInf with k backups adds

* L1: for every backup ``a``, critical node ``c`` and neighbour ``v`` of
  ``c``, a link ``a - v`` carrying ``lambda_cv`` should ``a`` take over ``c``;
* L2: a link between every pair of backups, carrying the largest
  critical-critical demand, needed only when two critical nodes are adjacent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable

from vinfpool.errors import ScenarioCapError, SchemaError
from vinfpool.reliability import FailureDistribution

DEFAULT_SCENARIO_CAP = 10**6


@dataclass(frozen=True)
class VInfRequest:
    """Undirected virtual graph with compute and bandwidth demands.

    ``edges`` maps ``(u, v)`` pairs to bandwidth; each unordered pair may
    appear once. ``failure`` is the critical-node failure pmf; ``None``
    means independent failures with probability ``p``.
    """

    nodes: dict[str, float]
    edges: dict[tuple[str, str], float]
    critical: frozenset[str] = frozenset()
    reliability: float | None = None
    p: float = 0.01
    failure: FailureDistribution | None = None
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "critical", frozenset(self.critical))
        seen: set[frozenset[str]] = set()
        for (u, v), bw in self.edges.items():
            if u == v:
                raise SchemaError(f"self-loop on {u!r}")
            if u not in self.nodes or v not in self.nodes:
                raise SchemaError(f"edge ({u!r}, {v!r}) references an unknown node")
            key = frozenset((u, v))
            if key in seen:
                raise SchemaError(f"duplicate edge between {u!r} and {v!r}")
            seen.add(key)
            if not bw > 0:
                raise SchemaError(f"edge ({u!r}, {v!r}) needs positive bandwidth")
        for u, demand in self.nodes.items():
            if demand < 0:
                raise SchemaError(f"node {u!r} has negative compute demand")
        if not self.critical <= set(self.nodes):
            raise SchemaError("critical set references unknown nodes")
        if bool(self.critical) != (self.reliability is not None):
            raise SchemaError("a reliability target is required exactly when critical nodes exist")
        if self.failure is not None and self.failure.n != len(self.critical):
            raise SchemaError("failure distribution size differs from the critical count")

    def neighbors(self, u: str) -> list[str]:
        out = []
        for a, b in self.edges:
            if a == u:
                out.append(b)
            elif b == u:
                out.append(a)
        return out

    def bandwidth(self, u: str, v: str) -> float:
        if (u, v) in self.edges:
            return self.edges[(u, v)]
        return self.edges[(v, u)]

    def critical_sorted(self) -> list[str]:
        return sorted(self.critical)


@dataclass(frozen=True)
class ExpandedVInf:
    base: VInfRequest
    backups: tuple[str, ...] = ()
    backup_demand: float = 0.0
    l1: tuple[tuple[str, str, str, float], ...] = ()
    l2: tuple[tuple[str, str, float], ...] = ()

    @property
    def k(self) -> int:
        return len(self.backups)

    @property
    def l1_links(self) -> set[tuple[str, str]]:
        """Distinct backup-neighbour pairs, i.e. the L1 links as drawn."""
        return {(a, v) for a, _, v, _ in self.l1}

    @property
    def redundant_link_count(self) -> int:
        return len(self.l1_links) + len(self.l2)

    @property
    def l2_demand(self) -> float:
        return self.l2[0][2] if self.l2 else 0.0

    def l1_targets(self) -> list[str]:
        """Neighbours v that appear in some L1 triple, in first-seen order."""
        return list(dict.fromkeys(v for _, _, v, _ in self.l1))

    def virtual_nodes(self) -> list[str]:
        return [*self.base.nodes, *self.backups]


def backup_names(k: int, taken: Iterable[str]) -> tuple[str, ...]:
    taken = set(taken)
    names = []
    i = 0
    while len(names) < k:
        name = f"b{i}"
        if name not in taken:
            names.append(name)
        i += 1
    return tuple(names)


def max_critical_pair_demand(vinf: VInfRequest) -> float:
    pairs = [bw for (u, v), bw in vinf.edges.items() if u in vinf.critical and v in vinf.critical]
    return max(pairs, default=0.0)


def expand(vinf: VInfRequest, k: int, names: Iterable[str] | None = None) -> ExpandedVInf:
    if k < 0:
        raise ValueError("k must be non-negative")
    if k > 0 and not vinf.critical:
        raise ValueError("backups require at least one critical node")
    if k == 0:
        return ExpandedVInf(base=vinf)
    backups = tuple(names) if names is not None else backup_names(k, vinf.nodes)
    if len(backups) != k or len(set(backups)) != k or set(backups) & set(vinf.nodes):
        raise ValueError("backup names must be k distinct names not used by the VInf")
    demand = max(vinf.nodes[c] for c in vinf.critical)
    crit = vinf.critical_sorted()
    l1 = tuple(
        (a, c, v, vinf.bandwidth(c, v))
        for a in backups
        for c in crit
        for v in vinf.neighbors(c)
    )
    l2_bw = max_critical_pair_demand(vinf)
    l2 = tuple((a, b, l2_bw) for a, b in itertools.combinations(backups, 2)) if l2_bw > 0 else ()
    return ExpandedVInf(base=vinf, backups=backups, backup_demand=demand, l1=l1, l2=l2)


def scenario_count(n_critical: int, k: int) -> int:
    return sum(math.comb(n_critical, j) for j in range(1, min(k, n_critical) + 1))


def scenario_set(expanded: ExpandedVInf, cap: int = DEFAULT_SCENARIO_CAP) -> list[tuple[str, ...]]:
    """Critical subsets of size 1..min(k, |C|), by size then lexicographically."""
    crit = expanded.base.critical_sorted()
    count = scenario_count(len(crit), expanded.k)
    if count > cap:
        raise ScenarioCapError(f"{count} failure scenarios exceed the cap of {cap}")
    return [
        combo
        for j in range(1, min(expanded.k, len(crit)) + 1)
        for combo in itertools.combinations(crit, j)
    ]
