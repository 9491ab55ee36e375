"""Joint embedding of primary and redundant virtual resources.

The program is a node-link multi-commodity flow. Each virtual node ``u``
gets one mapping variable ``rho[u, mu]`` per candidate host; every virtual
link becomes a commodity that leaves its source through a mapping arc
``u -> mu``, travels over directed physical arcs and enters its sink
through ``nu -> v``. Mapping arcs carry flow only where ``rho`` is set,
enforced by a big-M coupling row.

Redundant L1 flows are reserved through an aggregate ``l_o[v, arc]`` per
neighbour ``v`` of a critical node. Three aggregation modes exist:

``assignment``
    ``l_o`` covers the worst way of handing at most k failed critical
    neighbours of ``v`` to distinct backups, i.e. a maximum-weight
    bipartite matching; written through its LP dual, so exact and compact.
``scenario-sum``
    for each failure scenario C', ``l_o`` covers the L1 flow summed over
    every backup and every critical node in C'.
``none``
    ``l_o`` covers the L1 flows of all backups and critical nodes at once,
    i.e. redundant links embedded without any overlap.

Solving relaxes the integrality of ``rho``, rounds greedily by descending
fractional value, then fixes ``rho`` and re-solves for the flows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np
from scipy.optimize import linear_sum_assignment

from vinfpool import lp as lpmod
from vinfpool.errors import (
    CapacityError,
    EmbeddingInfeasible,
    InconsistentProblem,
    ReleaseError,
    SchemaError,
)
from vinfpool.lp import EQ, LE, LinearProgram
from vinfpool.topology import DEFAULT_SCENARIO_CAP, ExpandedVInf, scenario_count, scenario_set

OVERLAP_MODES = ("assignment", "scenario-sum", "none")
CAPACITY_TOL = 1e-6
FLOW_EPS = 1e-9

Node = tuple[str, str]  # ("p", physical) or ("v", virtual)
Arc = tuple[Node, Node]


# -- physical substrate --------------------------------------------------------


@dataclass
class Reservation:
    compute: dict[str, float] = field(default_factory=dict)
    redundant_compute: dict[str, float] = field(default_factory=dict)
    bandwidth: dict[tuple[str, str], float] = field(default_factory=dict)
    redundant_bandwidth: dict[tuple[str, str], float] = field(default_factory=dict)

    def total_compute(self) -> dict[str, float]:
        return _merge(self.compute, self.redundant_compute)

    def total_bandwidth(self) -> dict[tuple[str, str], float]:
        return _merge(self.bandwidth, self.redundant_bandwidth)

    def is_empty(self) -> bool:
        return not any((self.compute, self.redundant_compute, self.bandwidth, self.redundant_bandwidth))


def _merge(a: Mapping[Any, float], b: Mapping[Any, float]) -> dict[Any, float]:
    out = dict(a)
    for key, v in b.items():
        out[key] = out.get(key, 0.0) + v
    return out


class PhysicalNetwork:
    """Substrate capacities plus the live reservations drawn against them.

    Residual capacity is always recomputed as the original capacity minus
    an exactly rounded sum of live reservations, so releasing everything
    restores the original values bit for bit, whatever the order.
    """

    def __init__(self, compute: Mapping[str, float], links: Mapping[tuple[str, str], float],
                 racks: Mapping[str, str] | None = None) -> None:
        self.capacity: dict[str, float] = {}
        for name, cap in compute.items():
            if not cap >= 0:
                raise SchemaError(f"node {name!r} has negative compute capacity")
            self.capacity[str(name)] = float(cap)
        self.link_capacity: dict[tuple[str, str], float] = {}
        self._key: dict[tuple[str, str], tuple[str, str]] = {}
        for (a, b), bw in links.items():
            if a == b:
                raise SchemaError(f"self-loop on {a!r}")
            if a not in self.capacity or b not in self.capacity:
                raise SchemaError(f"link ({a!r}, {b!r}) references an unknown node")
            if (a, b) in self._key:
                raise SchemaError(f"duplicate link between {a!r} and {b!r}")
            if not bw >= 0:
                raise SchemaError(f"link ({a!r}, {b!r}) has negative bandwidth")
            self.link_capacity[(a, b)] = float(bw)
            self._key[(a, b)] = (a, b)
            self._key[(b, a)] = (a, b)
        self.racks = dict(racks or {})
        self.reservations: dict[str, Reservation] = {}

    @property
    def nodes(self) -> list[str]:
        return list(self.capacity)

    @property
    def links(self) -> list[tuple[str, str]]:
        return list(self.link_capacity)

    def link_key(self, a: str, b: str) -> tuple[str, str]:
        return self._key[(a, b)]

    def has_link(self, a: str, b: str) -> bool:
        return (a, b) in self._key

    def residual_compute(self, node: str) -> float:
        used = [r.compute.get(node, 0.0) for r in self.reservations.values()]
        used += [r.redundant_compute.get(node, 0.0) for r in self.reservations.values()]
        return self.capacity[node] - math.fsum(used)

    def residual_bandwidth(self, a: str, b: str) -> float:
        key = self.link_key(a, b)
        used = [r.bandwidth.get(key, 0.0) for r in self.reservations.values()]
        used += [r.redundant_bandwidth.get(key, 0.0) for r in self.reservations.values()]
        return self.link_capacity[key] - math.fsum(used)

    def used(self, redundant: bool) -> tuple[float, float]:
        """Total reserved (compute, bandwidth), primary or redundant part."""
        if redundant:
            cpu = [v for r in self.reservations.values() for v in r.redundant_compute.values()]
            bw = [v for r in self.reservations.values() for v in r.redundant_bandwidth.values()]
        else:
            cpu = [v for r in self.reservations.values() for v in r.compute.values()]
            bw = [v for r in self.reservations.values() for v in r.bandwidth.values()]
        return math.fsum(cpu), math.fsum(bw)

    def snapshot(self) -> PhysicalNetwork:
        """A reservation-free network whose capacities are the current residuals."""
        compute = {n: max(0.0, self.residual_compute(n)) for n in self.capacity}
        links = {k: max(0.0, self.residual_bandwidth(*k)) for k in self.link_capacity}
        return PhysicalNetwork(compute, links, self.racks)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "nodes": [{"id": n, "compute": c, **({"rack": self.racks[n]} if n in self.racks else {})}
                      for n, c in self.capacity.items()],
            "links": [{"a": a, "b": b, "bandwidth": bw} for (a, b), bw in self.link_capacity.items()],
        }
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PhysicalNetwork:
        compute = {}
        for entry in data["nodes"]:
            if entry["id"] in compute:
                raise SchemaError(f"duplicate node {entry['id']!r}")
            compute[entry["id"]] = float(entry["compute"])
        racks = {e["id"]: str(e["rack"]) for e in data["nodes"] if "rack" in e}
        links: dict[tuple[str, str], float] = {}
        for e in data.get("links", []):
            a, b = e["a"], e["b"]
            if (a, b) in links or (b, a) in links:
                raise SchemaError(f"duplicate link between {a!r} and {b!r}")
            links[(a, b)] = float(e["bandwidth"])
        return cls(compute, links, racks)


def apply_reservation(network: PhysicalNetwork, lease_id: str, res: Reservation) -> PhysicalNetwork:
    if lease_id in network.reservations:
        raise CapacityError(f"lease {lease_id!r} already applied")
    for node, need in res.total_compute().items():
        if need > network.residual_compute(node) + CAPACITY_TOL:
            raise CapacityError(f"node {node!r}: need {need}, have {network.residual_compute(node)}")
    for key, need in res.total_bandwidth().items():
        if need > network.residual_bandwidth(*key) + CAPACITY_TOL:
            raise CapacityError(f"link {key!r}: need {need}, have {network.residual_bandwidth(*key)}")
    network.reservations[lease_id] = res
    return network


def release(network: PhysicalNetwork, lease_id: str) -> PhysicalNetwork:
    if lease_id not in network.reservations:
        raise ReleaseError(f"lease {lease_id!r} is not applied")
    del network.reservations[lease_id]
    return network


def apply(network: PhysicalNetwork, solution: EmbeddingSolution, lease_id: str) -> PhysicalNetwork:
    return apply_reservation(network, lease_id, solution.reservation())


# -- problem and solution ------------------------------------------------------


@dataclass
class EmbeddingProblem:
    """Everything the program builder needs.

    ``physical`` capacities are read as what is currently available.
    ``backup_compute`` overrides the per-backup compute demand (0 when a
    pool already holds the slot) and ``l2_demand`` the L2 demand (0 omits
    L2 entirely).
    """

    physical: PhysicalNetwork
    expanded: ExpandedVInf
    excluded: Mapping[str, Iterable[str]] = field(default_factory=dict)
    preferred: Mapping[str, Iterable[str]] = field(default_factory=dict)
    rack_separation: bool = False
    pinned: Mapping[str, str] = field(default_factory=dict)
    backup_compute: float | None = None
    l2_demand: float | None = None
    alpha: Mapping[str, float] | None = None
    beta: Mapping[tuple[str, str], float] | None = None
    big_lambda: float | None = None
    epsilon: float = 1.0
    overlap: str = "assignment"
    scenario_cap: int = DEFAULT_SCENARIO_CAP
    backend: str = "highs"

    def __post_init__(self) -> None:
        if self.overlap not in OVERLAP_MODES:
            raise ValueError(f"overlap mode must be one of {OVERLAP_MODES}")
        virtual = set(self.expanded.virtual_nodes())
        hosts = set(self.physical.nodes)
        self.excluded = {u: frozenset(v) for u, v in self.excluded.items()}
        self.preferred = {u: frozenset(v) for u, v in self.preferred.items()}
        self.pinned = dict(self.pinned)
        for table in (self.excluded, self.preferred, self.pinned):
            unknown = set(table) - virtual
            if unknown:
                raise InconsistentProblem(f"placement rules for unknown virtual nodes {sorted(unknown)}")
        for u, pref in self.preferred.items():
            if pref & self.excluded.get(u, frozenset()):
                raise InconsistentProblem(f"preferred and excluded hosts overlap for {u!r}")
        for u, mu in self.pinned.items():
            if mu not in hosts:
                raise InconsistentProblem(f"{u!r} pinned to unknown host {mu!r}")
            if mu in self.excluded.get(u, ()):
                raise InconsistentProblem(f"{u!r} pinned to an excluded host")
            if u in self.preferred and mu not in self.preferred[u]:
                raise InconsistentProblem(f"{u!r} pinned outside its preferred hosts")
        if len(set(self.pinned.values())) != len(self.pinned):
            raise InconsistentProblem("two virtual nodes pinned to the same host")

    def demand(self, u: str) -> float:
        if u in self.expanded.base.nodes:
            return self.expanded.base.nodes[u]
        if self.backup_compute is not None:
            return self.backup_compute
        return self.expanded.backup_demand

    def candidates(self, u: str) -> list[str]:
        """Hosts u may map to: pinned host, else allowed hosts with room for u."""
        if u in self.pinned:
            return [self.pinned[u]]
        g = self.demand(u)
        cap = self.physical.capacity
        out = [mu for mu in self.physical.nodes
               if mu not in self.excluded.get(u, ()) and g <= cap[mu] + 1e-9]
        if u in self.preferred:
            out = [mu for mu in out if mu in self.preferred[u]]
        return out

    def effective_l2(self) -> float:
        return self.expanded.l2_demand if self.l2_demand is None else self.l2_demand

    def commodities(self) -> list[tuple[tuple, str, str, float]]:
        """(key, source, sink, demand) for every E, L1 and L2 flow."""
        exp = self.expanded
        out: list[tuple[tuple, str, str, float]] = [
            (("E", u, v), u, v, bw) for (u, v), bw in exp.base.edges.items()
        ]
        out += [(("L1", a, c, v), a, v, bw) for a, c, v, bw in exp.l1]
        l2 = self.effective_l2()
        if l2 > 0:
            out += [(("L2", a, b), a, b, l2) for a, b, _ in exp.l2]
        return out

    def neighbor_criticals(self) -> dict[str, list[str]]:
        """v -> critical nodes adjacent to v, over L1 targets."""
        out: dict[str, list[str]] = {}
        for _, c, v, _ in self.expanded.l1:
            lst = out.setdefault(v, [])
            if c not in lst:
                lst.append(c)
        return out

    def alpha_of(self, mu: str) -> float:
        if self.alpha is not None:
            return self.alpha[mu]
        return 1.0 / (self.physical.capacity[mu] + self.epsilon)

    def beta_of(self, key: tuple[str, str]) -> float:
        if self.beta is not None:
            return self.beta[key] if key in self.beta else self.beta[(key[1], key[0])]
        return 1.0 / (self.physical.link_capacity[key] + self.epsilon)

    def lambda_big(self) -> float:
        if self.big_lambda is not None:
            return self.big_lambda
        return math.fsum(d for *_, d in self.commodities()) + 1.0


@dataclass
class EmbeddingSolution:
    mapping: dict[str, str]
    flows: dict[tuple, dict[Arc, float]]
    overlap: dict[str, dict[tuple[str, str], float]]
    objective: float
    relaxed_objective: float
    compute: dict[str, float]
    redundant_compute: dict[str, float]
    bandwidth: dict[tuple[str, str], float]
    redundant_bandwidth: dict[tuple[str, str], float]

    def reservation(self) -> Reservation:
        return Reservation(dict(self.compute), dict(self.redundant_compute),
                           dict(self.bandwidth), dict(self.redundant_bandwidth))

    def to_dict(self) -> dict[str, Any]:
        def arcs(d: Mapping[Arc, float]) -> list[dict[str, Any]]:
            return [{"from": f"{i[0]}:{i[1]}", "to": f"{j[0]}:{j[1]}", "value": v} for (i, j), v in d.items()]

        return {
            "mapping": dict(self.mapping),
            "objective": self.objective,
            "relaxed_objective": self.relaxed_objective,
            "flows": [{"commodity": list(k), "arcs": arcs(v)} for k, v in self.flows.items()],
            "overlap": [{"neighbor": v, "arcs": [{"from": a, "to": b, "value": x} for (a, b), x in d.items()]}
                        for v, d in self.overlap.items()],
            "compute": [{"node": n, "primary": self.compute.get(n, 0.0),
                         "redundant": self.redundant_compute.get(n, 0.0)}
                        for n in sorted(set(self.compute) | set(self.redundant_compute))],
            "bandwidth": [{"a": k[0], "b": k[1], "primary": self.bandwidth.get(k, 0.0),
                           "redundant": self.redundant_bandwidth.get(k, 0.0)}
                          for k in sorted(set(self.bandwidth) | set(self.redundant_bandwidth))],
        }


# -- program construction ------------------------------------------------------


@dataclass
class ProgramLayout:
    rho: dict[tuple[str, str], int] = field(default_factory=dict)
    flow: dict[tuple, dict[Arc, int]] = field(default_factory=dict)
    overlap: dict[str, dict[tuple[str, str], int]] = field(default_factory=dict)
    overlap_rows: int = 0
    scenarios: int = 0


def _phys_arcs(net: PhysicalNetwork) -> list[tuple[str, str]]:
    """Both directions of every link that has bandwidth left."""
    out = []
    for (a, b), cap in net.link_capacity.items():
        if cap > FLOW_EPS:
            out += [(a, b), (b, a)]
    return out


def build_program(problem: EmbeddingProblem) -> LinearProgram:
    return _build(problem)[0]


def _build(problem: EmbeddingProblem) -> tuple[LinearProgram, ProgramLayout]:
    net = problem.physical
    exp = problem.expanded
    lp = LinearProgram()
    lay = ProgramLayout()
    if problem.overlap != "none" and exp.k:
        lay.scenarios = scenario_count(len(exp.base.critical), exp.k)
        if lay.scenarios > problem.scenario_cap:
            scenario_set(exp, problem.scenario_cap)  # raises
    virtual = exp.virtual_nodes()
    arcs = _phys_arcs(net)

    # node maps
    for u in virtual:
        hosts = set(problem.candidates(u))
        for mu in net.nodes:
            allowed = mu in hosts
            fixed = u in problem.pinned
            cost = problem.alpha_of(mu) * problem.demand(u)
            lay.rho[(u, mu)] = lp.add_var(f"rho[{u},{mu}]", lb=1.0 if fixed and allowed else 0.0,
                                          ub=1.0 if allowed else 0.0, integer=True, cost=cost)
    for u in virtual:
        lp.add_row([(lay.rho[(u, mu)], 1.0) for mu in net.nodes], EQ, 1.0, f"onemap[{u}]")
    for mu in net.nodes:
        lp.add_row([(lay.rho[(u, mu)], 1.0) for u in virtual], LE, 1.0, f"nooverlap[{mu}]")
    if problem.rack_separation:
        groups: dict[str, list[str]] = {}
        for mu in net.nodes:
            if mu in net.racks:
                groups.setdefault(net.racks[mu], []).append(mu)
        for rack, members in groups.items():
            if len(members) > 1:
                lp.add_row([(lay.rho[(u, mu)], 1.0) for u in exp.base.nodes for mu in members],
                           LE, 1.0, f"rack[{rack}]")
    for u in virtual:
        g = problem.demand(u)
        if g <= 0:
            continue
        for mu in problem.candidates(u):
            lp.add_row([(lay.rho[(u, mu)], g)], LE, net.capacity[mu], f"cpu[{u},{mu}]")

    # commodities
    coupling: dict[tuple[str, str], list[int]] = {}
    link_terms: dict[tuple[str, str], list[tuple[int, float]]] = {k: [] for k in net.links}
    for key, s, t, demand in problem.commodities():
        tag = ",".join(key)
        idx: dict[Arc, int] = {}
        for a, b in arcs:
            idx[(("p", a), ("p", b))] = lp.add_var(f"f[{tag}][{a},{b}]")
        for mu in problem.candidates(s):
            j = lp.add_var(f"f[{tag}][>{mu}]")
            idx[(("v", s), ("p", mu))] = j
            coupling.setdefault((s, mu), []).append(j)
        for mu in problem.candidates(t):
            j = lp.add_var(f"f[{tag}][<{mu}]")
            idx[(("p", mu), ("v", t))] = j
            coupling.setdefault((t, mu), []).append(j)
        lay.flow[key] = idx
        out_terms: dict[Node, list[tuple[int, float]]] = {}
        for (i, j), var in idx.items():
            out_terms.setdefault(i, []).append((var, 1.0))
            out_terms.setdefault(j, []).append((var, -1.0))
        lp.add_row(out_terms.get(("v", s), []), EQ, demand, f"src[{tag}]")
        lp.add_row(out_terms.get(("v", t), []), EQ, -demand, f"dst[{tag}]")
        for mu in net.nodes:
            lp.add_row(out_terms.get(("p", mu), []), EQ, 0.0, f"mid[{tag},{mu}]")
        if key[0] != "L1":
            for a, b in arcs:
                link_terms[net.link_key(a, b)].append((idx[(("p", a), ("p", b))], 1.0))

    # overlapped L1 reservation
    neigh = problem.neighbor_criticals()
    for v, crit in neigh.items():
        lay.overlap[v] = {arc: lp.add_var(f"lo[{v}][{arc[0]},{arc[1]}]") for arc in arcs}
        for a, b in arcs:
            link_terms[net.link_key(a, b)].append((lay.overlap[v][(a, b)], 1.0))
    before = lp.num_rows
    if problem.overlap == "assignment":
        _matching_rows(lp, lay, exp, neigh, arcs)
    elif problem.overlap == "scenario-sum":
        _scenario_rows(lp, lay, problem, arcs)
    else:
        for v, crit in neigh.items():
            for arc in arcs:
                pa = (("p", arc[0]), ("p", arc[1]))
                terms = [(lay.flow[("L1", a, c, v)][pa], 1.0) for a in exp.backups for c in crit]
                lp.add_row(terms + [(lay.overlap[v][arc], -1.0)], LE, 0.0, f"ov[{v},{arc[0]},{arc[1]}]")
    lay.overlap_rows = lp.num_rows - before

    for (a, b), terms in link_terms.items():
        if terms:
            lp.add_row(terms, LE, net.link_capacity[(a, b)], f"cap[{a},{b}]")
    big = problem.lambda_big()
    for (u, mu), vars_ in coupling.items():
        lp.add_row([(j, 1.0) for j in vars_] + [(lay.rho[(u, mu)], -big)], LE, 0.0, f"map[{u},{mu}]")

    # bandwidth cost over E, L2 and overlapped L1, both directions
    for key, idx in lay.flow.items():
        if key[0] == "L1":
            continue
        for a, b in arcs:
            lp.set_cost(idx[(("p", a), ("p", b))], problem.beta_of(net.link_key(a, b)))
    for v, d in lay.overlap.items():
        for (a, b), j in d.items():
            lp.set_cost(j, problem.beta_of(net.link_key(a, b)))
    return lp, lay


def _matching_rows(lp: LinearProgram, lay: ProgramLayout, exp: ExpandedVInf,
                   neigh: Mapping[str, list[str]], arcs: list[tuple[str, str]]) -> None:
    backups = exp.backups
    for v, crit in neigh.items():
        for arc in arcs:
            pa = (("p", arc[0]), ("p", arc[1]))
            lo = lay.overlap[v][arc]
            tag = f"{v},{arc[0]},{arc[1]}"
            if len(crit) == 1 or len(backups) == 1:
                # a matching uses one edge here, so l_o bounds each flow separately
                for a in backups:
                    for c in crit:
                        lp.add_row([(lay.flow[("L1", a, c, v)][pa], 1.0), (lo, -1.0)], LE, 0.0,
                                   f"ov[{tag},{a},{c}]")
                continue
            # l_o >= max-weight matching  <=>  exists y, w >= 0 with
            # y_c + w_a >= flow[a, c] and sum(y) + sum(w) <= l_o
            y = {c: lp.add_var(f"oy[{tag},{c}]") for c in crit}
            w = {a: lp.add_var(f"ow[{tag},{a}]") for a in backups}
            for a in backups:
                for c in crit:
                    lp.add_row([(lay.flow[("L1", a, c, v)][pa], 1.0), (y[c], -1.0), (w[a], -1.0)],
                               LE, 0.0, f"ov[{tag},{a},{c}]")
            lp.add_row([(j, 1.0) for j in (*y.values(), *w.values())] + [(lo, -1.0)], LE, 0.0,
                       f"ovsum[{tag}]")


def _scenario_rows(lp: LinearProgram, lay: ProgramLayout, problem: EmbeddingProblem,
                   arcs: list[tuple[str, str]]) -> None:
    exp = problem.expanded
    scenarios = scenario_set(exp, problem.scenario_cap)
    neigh = problem.neighbor_criticals()
    for si, scen in enumerate(scenarios):
        for v, crit in neigh.items():
            members = [c for c in scen if c in crit]
            for arc in arcs:
                pa = (("p", arc[0]), ("p", arc[1]))
                terms = [(lay.flow[("L1", a, c, v)][pa], 1.0) for a in exp.backups for c in members]
                lp.add_row(terms + [(lay.overlap[v][arc], -1.0)], LE, 0.0,
                           f"ov[{si},{v},{arc[0]},{arc[1]}]")


# -- solving -------------------------------------------------------------------


def _round(problem: EmbeddingProblem, rho: Mapping[tuple[str, str], float]) -> dict[str, str]:
    net = problem.physical
    order = {mu: i for i, mu in enumerate(net.nodes)}
    virtual = problem.expanded.virtual_nodes()
    vorder = {u: i for i, u in enumerate(virtual)}
    primaries = set(problem.expanded.base.nodes)
    mapping: dict[str, str] = {}
    used_hosts: set[str] = set()
    used_racks: set[str] = set()

    def take(u: str, mu: str) -> bool:
        if u in mapping or mu in used_hosts:
            return False
        if problem.demand(u) > net.capacity[mu] + 1e-9:
            return False
        rack = net.racks.get(mu)
        check_rack = problem.rack_separation and u in primaries and rack is not None
        if check_rack and rack in used_racks:
            return False
        mapping[u] = mu
        used_hosts.add(mu)
        if check_rack:
            used_racks.add(rack)
        return True

    for u, mu in problem.pinned.items():
        if not take(u, mu):
            raise EmbeddingInfeasible(f"pinned node {u!r} does not fit on {mu!r}")
    cands = [(u, mu) for u in virtual if u not in problem.pinned for mu in problem.candidates(u)]
    cands.sort(key=lambda um: (-rho.get(um, 0.0), order[um[1]], vorder[um[0]]))
    for u, mu in cands:
        take(u, mu)
    missing = [u for u in virtual if u not in mapping]
    if missing:
        raise EmbeddingInfeasible(f"no host left for {missing}")
    return mapping


def solve_embedding(problem: EmbeddingProblem) -> EmbeddingSolution:
    homeless = [u for u in problem.expanded.virtual_nodes() if not problem.candidates(u)]
    if homeless:
        raise EmbeddingInfeasible(f"no candidate host for {homeless}")
    lp, lay = _build(problem)
    relaxed = lpmod.solve(lp, relax_integrality=True, backend=problem.backend)
    if not relaxed.optimal:
        raise EmbeddingInfeasible(f"relaxation {relaxed.status}")
    rho = {um: float(relaxed.x[j]) for um, j in lay.rho.items()}
    mapping = _round(problem, rho)
    for (u, mu), j in lay.rho.items():
        val = 1.0 if mapping[u] == mu else 0.0
        lp.set_bounds(j, val, val)
    final = lpmod.solve(lp, relax_integrality=True, backend=problem.backend)
    if not final.optimal:
        raise EmbeddingInfeasible(f"flow re-solve {final.status} for the rounded map")
    return _extract(problem, lay, final.x, mapping, final.objective, relaxed.objective)


def solve_fixed_map(problem: EmbeddingProblem, mapping: Mapping[str, str]) -> EmbeddingSolution:
    """Optimal flows for a given node map (raises when it admits none)."""
    lp, lay = _build(problem)
    for (u, mu), j in lay.rho.items():
        val = 1.0 if mapping[u] == mu else 0.0
        if val > lp.variables[j].ub:
            raise EmbeddingInfeasible(f"{u!r} may not be placed on {mu!r}")
        lp.set_bounds(j, val, val)
    sol = lpmod.solve(lp, relax_integrality=True, backend=problem.backend)
    if not sol.optimal:
        raise EmbeddingInfeasible(f"flow program {sol.status}")
    return _extract(problem, lay, sol.x, dict(mapping), sol.objective, sol.objective)


def _extract(problem: EmbeddingProblem, lay: ProgramLayout, x: np.ndarray, mapping: dict[str, str],
             objective: float, relaxed: float) -> EmbeddingSolution:
    net = problem.physical
    flows = {key: {arc: float(x[j]) for arc, j in idx.items() if x[j] > FLOW_EPS}
             for key, idx in lay.flow.items()}
    overlap = {v: {arc: float(x[j]) for arc, j in d.items() if x[j] > FLOW_EPS}
               for v, d in lay.overlap.items()}
    compute: dict[str, float] = {}
    red_compute: dict[str, float] = {}
    for u, mu in mapping.items():
        g = problem.demand(u)
        if g <= 0:
            continue
        target = compute if u in problem.expanded.base.nodes else red_compute
        target[mu] = target.get(mu, 0.0) + g
    bw: dict[tuple[str, str], list[float]] = {}
    red_bw: dict[tuple[str, str], list[float]] = {}
    for key, d in flows.items():
        if key[0] == "L1":
            continue
        target = bw if key[0] == "E" else red_bw
        for (i, j), val in d.items():
            if i[0] == "p" and j[0] == "p":
                target.setdefault(net.link_key(i[1], j[1]), []).append(val)
    for d in overlap.values():
        for (a, b), val in d.items():
            red_bw.setdefault(net.link_key(a, b), []).append(val)
    return EmbeddingSolution(
        mapping=mapping,
        flows=flows,
        overlap=overlap,
        objective=objective,
        relaxed_objective=relaxed,
        compute=compute,
        redundant_compute=red_compute,
        bandwidth={k: math.fsum(v) for k, v in bw.items()},
        redundant_bandwidth={k: math.fsum(v) for k, v in red_bw.items()},
    )


# -- independent validation ----------------------------------------------------


@dataclass
class ValidationReport:
    violations: dict[str, float] = field(default_factory=dict)
    locations: dict[str, str] = field(default_factory=dict)

    def record(self, family: str, amount: float, where: str) -> None:
        if amount > self.violations.get(family, 0.0):
            self.violations[family] = amount
            self.locations[family] = where
        else:
            self.violations.setdefault(family, 0.0)

    def worst(self) -> float:
        return max(self.violations.values(), default=0.0)

    def ok(self, tol: float = CAPACITY_TOL) -> bool:
        return self.worst() <= tol


def _required_overlap(mode: str, weights: np.ndarray, crit: list[str], scenarios: list[tuple[str, ...]]) -> float:
    """L1 bandwidth that must be reserved on one arc; weights[a, c]."""
    if weights.size == 0:
        return 0.0
    if mode == "none":
        return float(weights.sum())
    if mode == "scenario-sum":
        col = {c: i for i, c in enumerate(crit)}
        return max((float(weights[:, [col[c] for c in s if c in col]].sum()) for s in scenarios), default=0.0)
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return float(weights[rows, cols].sum())


def validate(solution: EmbeddingSolution, problem: EmbeddingProblem) -> ValidationReport:
    """Re-check every constraint family from the raw solution values."""
    rep = ValidationReport()
    net = problem.physical
    exp = problem.expanded
    virtual = exp.virtual_nodes()
    m = solution.mapping

    for u in virtual:
        rep.record("one_map", 0.0 if u in m and m[u] in net.capacity else 1.0, u)
    hosts: dict[str, list[str]] = {}
    for u, mu in m.items():
        hosts.setdefault(mu, []).append(u)
    for mu, us in hosts.items():
        rep.record("no_overlap", float(len(us) - 1), mu)
    for u, mu in m.items():
        bad = mu not in problem.candidates(u) if u in virtual else True
        rep.record("placement", 1.0 if bad else 0.0, f"{u}->{mu}")
        if mu in net.capacity:
            rep.record("compute", max(0.0, problem.demand(u) - net.capacity[mu]), f"{u}->{mu}")
    if problem.rack_separation:
        seen: dict[str, str] = {}
        for u in exp.base.nodes:
            rack = net.racks.get(m.get(u, ""))
            if rack is None:
                continue
            rep.record("separation", 1.0 if rack in seen else 0.0, f"{u},{seen.get(rack, '')}")
            seen[rack] = u

    link_use: dict[tuple[str, str], list[float]] = {k: [] for k in net.links}
    for key, s, t, demand in problem.commodities():
        flow = solution.flows.get(key, {})
        balance: dict[Node, list[float]] = {("v", s): [-demand], ("v", t): [demand]}
        for mu in net.nodes:
            balance[("p", mu)] = []
        for (i, j), val in flow.items():
            rep.record("nonnegativity", max(0.0, -val), f"{key}")
            legal = (
                (i[0] == "p" and j[0] == "p" and net.has_link(i[1], j[1]))
                or (i == ("v", s) and j == ("p", m.get(s)))
                or (i == ("p", m.get(t)) and j == ("v", t))
            )
            if not legal:
                rep.record("mapping", abs(val), f"{key} on {i}->{j}")
                continue
            balance.setdefault(i, []).append(val)
            balance.setdefault(j, []).append(-val)
            if key[0] != "L1" and i[0] == "p" and j[0] == "p":
                link_use[net.link_key(i[1], j[1])].append(val)
        for node, terms in balance.items():
            rep.record("conservation", abs(math.fsum(terms)), f"{key} at {node[0]}:{node[1]}")

    scenarios = scenario_set(exp, problem.scenario_cap) if problem.overlap == "scenario-sum" else []
    for v, crit in problem.neighbor_criticals().items():
        reserved = solution.overlap.get(v, {})
        for a_, b_ in net.links:
            for arc in ((a_, b_), (b_, a_)):
                pa = (("p", arc[0]), ("p", arc[1]))
                w = np.array([[solution.flows.get(("L1", a, c, v), {}).get(pa, 0.0) for c in crit]
                              for a in exp.backups])
                need = _required_overlap(problem.overlap, w, crit, scenarios)
                have = reserved.get(arc, 0.0)
                rep.record("overlap", max(0.0, need - have), f"{v} on {arc[0]}->{arc[1]}")
                link_use[net.link_key(*arc)].append(have)
    for key, terms in link_use.items():
        rep.record("capacity", max(0.0, math.fsum(terms) - net.link_capacity[key]), f"{key[0]}-{key[1]}")
    return rep


def solution_from_dict(data: Mapping[str, Any]) -> EmbeddingSolution:
    def node(text: str) -> Node:
        kind, _, name = text.partition(":")
        return (kind, name)

    flows = {tuple(f["commodity"]): {(node(a["from"]), node(a["to"])): float(a["value"]) for a in f["arcs"]}
             for f in data["flows"]}
    overlap = {o["neighbor"]: {(a["from"], a["to"]): float(a["value"]) for a in o["arcs"]}
               for o in data["overlap"]}
    return EmbeddingSolution(
        mapping=dict(data["mapping"]),
        flows=flows,
        overlap=overlap,
        objective=float(data["objective"]),
        relaxed_objective=float(data["relaxed_objective"]),
        compute={c["node"]: c["primary"] for c in data["compute"] if c["primary"]},
        redundant_compute={c["node"]: c["redundant"] for c in data["compute"] if c["redundant"]},
        bandwidth={(b["a"], b["b"]): b["primary"] for b in data["bandwidth"] if b["primary"]},
        redundant_bandwidth={(b["a"], b["b"]): b["redundant"] for b in data["bandwidth"] if b["redundant"]},
    )
