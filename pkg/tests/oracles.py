"""Reference computations shared by several test modules.

They are written against the problem definitions only, not against the
package internals. The embedding oracle enumerates node maps outright,
routes flows between physical hosts without mapping arcs and bounds the
overlapped L1 reservation by every bipartite matching explicitly.
"""

from __future__ import annotations

import itertools
import json
import math
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.optimize import linprog

from vinfpool.embed import EmbeddingProblem, PhysicalNetwork
from vinfpool.topology import VInfRequest, expand

FIXTURES = Path(__file__).parent / "fixtures"


def shared_link_problem(**kw) -> EmbeddingProblem:
    from vinfpool.cli import _vinf_from_json

    net = PhysicalNetwork.from_dict(json.loads((FIXTURES / "shared_link_physical.json").read_text()))
    vdata = json.loads((FIXTURES / "shared_link_vinf.json").read_text())
    exp = expand(_vinf_from_json(vdata), vdata["backups"], names=vdata["backup_names"])
    return EmbeddingProblem(net, exp, pinned=vdata["pinned"], **kw)


def shared_link_min_reservation() -> float:
    """Fewest L1 units on (m2, m4) over every simple-path routing of both backups.

    With one critical node at most one backup is active, so an arc needs
    the larger of the two backup flows, not their sum.
    """
    g = nx.Graph([("m1", "m4"), ("m2", "m4"), ("m3", "m2")])
    paths = {a: list(nx.all_simple_paths(g, src, "m4")) for a, src in (("a1", "m2"), ("a2", "m3"))}
    best = math.inf
    for p1, p2 in itertools.product(paths["a1"], paths["a2"]):
        use = {}
        for a, path in (("a1", p1), ("a2", p2)):
            for x, y in zip(path, path[1:]):
                use.setdefault(frozenset((x, y)), {})[a] = 1.0
        best = min(best, max(use.get(frozenset(("m2", "m4")), {"-": 0.0}).values()))
    return best


def random_instance(seed: int) -> EmbeddingProblem:
    """Five physical hosts, three virtual nodes, zero to two criticals."""
    rng = np.random.default_rng(seed)
    hosts = [f"h{i}" for i in range(5)]
    while True:
        g = nx.gnp_random_graph(5, 0.6, seed=int(rng.integers(2**31)))
        if nx.is_connected(g):
            break
    net = PhysicalNetwork({h: float(rng.integers(8, 25)) for h in hosts},
                          {(hosts[a], hosts[b]): float(rng.integers(4, 16)) for a, b in g.edges()})
    names = ["x", "y", "z"]
    edges = {}
    for a, b in itertools.combinations(names, 2):
        if rng.random() < 0.7:
            edges[(a, b)] = float(rng.integers(1, 5))
    if not edges:
        edges[("x", "y")] = 2.0
    n_crit = int(rng.integers(0, 3))
    critical = frozenset(rng.choice(names, size=n_crit, replace=False).tolist())
    vinf = VInfRequest({u: float(rng.integers(2, 9)) for u in names}, edges, critical,
                       0.99 if critical else None)
    k = int(rng.integers(1, 3)) if critical else 0
    return EmbeddingProblem(net, expand(vinf, k))


def _matchings(backups, crit):
    pairs = [(a, c) for a in backups for c in crit]
    for size in range(1, min(len(backups), len(crit)) + 1):
        for combo in itertools.combinations(pairs, size):
            if len({a for a, _ in combo}) == size and len({c for _, c in combo}) == size:
                yield combo


def fixed_map_objective(problem: EmbeddingProblem, mapping: dict[str, str]) -> float | None:
    """Optimal cost of ``mapping``, or None when no flow fits."""
    net = problem.physical
    exp = problem.expanded
    arcs = [arc for (a, b), cap in net.link_capacity.items() if cap > 0 for arc in ((a, b), (b, a))]
    demands = [(("E", u, v), u, v, bw) for (u, v), bw in exp.base.edges.items()]
    demands += [(("L1", a, c, v), a, v, bw) for a, c, v, bw in exp.l1]
    if exp.l2_demand > 0:
        demands += [(("L2", a, b), a, b, exp.l2_demand) for a, b, _ in exp.l2]
    col = {}
    for key, *_ in demands:
        for arc in arcs:
            col[(key, arc)] = len(col)
    targets = {}
    for _, c, v, _ in exp.l1:
        targets.setdefault(v, set()).add(c)
    for v in targets:
        for arc in arcs:
            col[("o", v, arc)] = len(col)
    n = len(col)
    cost = np.zeros(n)

    def beta(arc):
        key = arc if arc in net.link_capacity else (arc[1], arc[0])
        return 1.0 / (net.link_capacity[key] + 1.0)

    for (key, *rest), j in col.items():
        arc = rest[-1]
        if key == "o" or key[0] != "L1":
            cost[j] = beta(arc)
    a_eq, b_eq, a_ub, b_ub = [], [], [], []
    for key, s, t, d in demands:
        for h in net.nodes:
            row = np.zeros(n)
            for arc in arcs:
                if arc[0] == h:
                    row[col[(key, arc)]] += 1
                if arc[1] == h:
                    row[col[(key, arc)]] -= 1
            a_eq.append(row)
            b_eq.append(d if h == mapping[s] else -d if h == mapping[t] else 0.0)
    for v, crit in targets.items():
        for arc in arcs:
            for combo in _matchings(exp.backups, sorted(crit)):
                row = np.zeros(n)
                for a, c in combo:
                    row[col[(("L1", a, c, v), arc)]] = 1
                row[col[("o", v, arc)]] = -1
                a_ub.append(row)
                b_ub.append(0.0)
    for (a, b), cap in net.link_capacity.items():
        row = np.zeros(n)
        for arc in ((a, b), (b, a)):
            if arc not in arcs:
                continue
            for key, *_ in demands:
                if key[0] != "L1":
                    row[col[(key, arc)]] = 1
            for v in targets:
                row[col[("o", v, arc)]] = 1
        a_ub.append(row)
        b_ub.append(cap)
    res = linprog(cost, A_ub=np.array(a_ub) if a_ub else None, b_ub=b_ub or None,
                  A_eq=np.array(a_eq) if a_eq else None, b_eq=b_eq or None, bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    node_cost = math.fsum(problem.demand(u) / (net.capacity[mu] + 1.0) for u, mu in mapping.items())
    return node_cost + float(res.fun)


def exhaustive_optimum(problem: EmbeddingProblem) -> tuple[float | None, dict[str, str] | None]:
    """Best fixed-map objective over every injective map that fits compute."""
    net = problem.physical
    virtual = problem.expanded.virtual_nodes()
    best, arg = None, None
    for hosts in itertools.permutations(net.nodes, len(virtual)):
        mapping = dict(zip(virtual, hosts))
        if any(problem.demand(u) > net.capacity[mu] for u, mu in mapping.items()):
            continue
        if any(mu in problem.excluded.get(u, ()) for u, mu in mapping.items()):
            continue
        if any(mapping[u] != mu for u, mu in problem.pinned.items()):
            continue
        val = fixed_map_objective(problem, mapping)
        if val is not None and (best is None or val < best):
            best, arg = val, mapping
    return best, arg


def pool_enumeration(n0: int, k0: int, members: list[tuple[int, int]], p: float) -> float:
    """Anchor reliability with several members, by enumerating every node and slot.

    Members hold disjoint slot blocks. A member's failed nodes take its own
    up slots first; the anchor covers its failures with its own up slots
    plus whatever lent slots the members leave idle.
    """
    lent = sum(k for _, k in members)
    width = n0 + k0 + sum(n for n, _ in members)
    total = 0.0
    for bits in itertools.product((0, 1), repeat=width):
        w = math.prod(p if b else 1 - p for b in bits)
        anchor_down = sum(bits[:n0])
        slots = bits[n0:n0 + k0]
        spare = sum(1 for s in slots[lent:] if not s)
        slot_at, node_at = 0, n0 + k0
        for n, k in members:
            up = sum(1 for s in slots[slot_at:slot_at + k] if not s)
            down = sum(bits[node_at:node_at + n])
            spare += max(0, up - down)
            slot_at += k
            node_at += n
        if anchor_down <= spare:
            total += w
    return total


def load_cascade_oracle(n: int, d: float, p: float, trials: int, seed: int) -> np.ndarray:
    """Final failure count as the least fixed point of x -> #{u_i > 1 - d - x p}."""
    rng = np.random.default_rng(seed)
    u = rng.random((trials, n))
    g = np.stack([(u > 1.0 - d - x * p).sum(axis=1) for x in range(n + 1)], axis=1)
    settled = g <= np.arange(n + 1)
    return np.argmax(settled, axis=1)
