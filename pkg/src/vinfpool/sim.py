"""Slotted discrete-event simulation of VInf leases on a random substrate.

Three provisioning policies are compared:

* ``share``: backups sized per VInf, pooled across VInfs when the pool's
  anchor keeps its guarantee, redundant L1 bandwidth overlapped;
* ``noshare``: backups sized per VInf, no pooling, redundant links
  reserved without overlap (configurable);
* ``nonr``: no redundancy at all.

Every random draw comes from a named substream of the master seed, so all
policies see the same substrate, arrivals, requests and lease lengths.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from vinfpool.embed import (
    EmbeddingProblem,
    EmbeddingSolution,
    PhysicalNetwork,
    Reservation,
    apply_reservation,
    release,
    solve_embedding,
)
from vinfpool.errors import EmbeddingInfeasible, SchemaError
from vinfpool.pooling import BackupPool, PoolMember
from vinfpool.reliability import independent_distribution, min_backups
from vinfpool.topology import VInfRequest, backup_names, expand, max_critical_pair_demand

POLICIES = ("share", "noshare", "nonr")
METRICS = ("acceptance", "admitted", "cpu_primary", "cpu_redundant", "bw_primary", "bw_redundant", "backups")

# substream labels under the master seed
PHYSICAL, ARRIVALS, REQUESTS, LEASES = 0, 1, 2, 3


@dataclass(frozen=True)
class ScenarioConfig:
    nodes: int = 20
    compute_range: tuple[float, float] = (50.0, 100.0)
    edge_prob: float = 0.4
    bandwidth_range: tuple[float, float] = (50.0, 100.0)
    horizon: int = 200
    arrival_rate: float = 0.75
    departure_rate: float = 0.01
    arrival_mode: str = "geometric"
    size_range: tuple[int, int] = (2, 10)
    demand_range: tuple[float, float] = (5.0, 20.0)
    critical_cap: float = 0.9
    virtual_edge_prob: float = 0.4
    virtual_bw_min: float = 10.0
    virtual_bw_max: float = 35.0
    p: float = 0.01
    r: float = 0.9999
    policy: str = "share"
    seed: int = 0
    noshare_overlap: str = "none"
    drain: bool = False
    check_every: int = 0

    def __post_init__(self) -> None:
        for name in ("compute_range", "bandwidth_range", "size_range", "demand_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise SchemaError(f"{name} must be a non-empty non-negative range")
            object.__setattr__(self, name, (type(lo)(lo), type(hi)(hi)))
        if self.size_range[0] < 1:
            raise SchemaError("VInfs need at least one node")
        for name in ("edge_prob", "virtual_edge_prob", "departure_rate", "p", "r"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0 and not (name.endswith("edge_prob") and v in (0.0, 1.0)):
                raise SchemaError(f"{name} must lie in (0, 1)")
        if not 0.0 <= self.arrival_rate <= 1.0:
            raise SchemaError("arrival_rate must lie in [0, 1]")
        if not 0.0 <= self.critical_cap <= 1.0:
            raise SchemaError("critical_cap must lie in [0, 1]")
        if self.virtual_bw_min > self.virtual_bw_max or self.virtual_bw_min <= 0:
            raise SchemaError("virtual bandwidth range must be positive and non-empty")
        if self.policy not in POLICIES:
            raise SchemaError(f"policy must be one of {POLICIES}")
        if self.arrival_mode not in ("geometric", "bernoulli"):
            raise SchemaError("arrival_mode must be 'geometric' or 'bernoulli'")
        if self.nodes < 1 or self.horizon < 0:
            raise SchemaError("nodes must be positive and horizon non-negative")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ScenarioConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SchemaError(f"unknown config keys {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        try:
            return cls(**kw)
        except TypeError as exc:
            raise SchemaError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def generate_physical(config: ScenarioConfig, seed: int | None = None) -> PhysicalNetwork:
    rng = _rng(config.seed if seed is None else seed, PHYSICAL)
    names = [f"n{i}" for i in range(config.nodes)]
    compute = {n: float(rng.uniform(*config.compute_range)) for n in names}
    links = {}
    for a, b in itertools.combinations(names, 2):
        if rng.random() < config.edge_prob:
            links[(a, b)] = float(rng.uniform(*config.bandwidth_range))
    return PhysicalNetwork(compute, links)


def generate_request(config: ScenarioConfig, seed: int, slot: int) -> VInfRequest:
    rng = _rng(seed, REQUESTS, slot)
    size = int(rng.integers(config.size_range[0], config.size_range[1] + 1))
    names = [f"u{i}" for i in range(size)]
    nodes = {u: float(rng.uniform(*config.demand_range)) for u in names}
    n_crit = int(rng.integers(0, math.floor(config.critical_cap * size) + 1))
    critical = frozenset(names[i] for i in sorted(rng.choice(size, n_crit, replace=False)))
    edges = {}
    for a, b in itertools.combinations(names, 2):
        if rng.random() < config.virtual_edge_prob:
            edges[(a, b)] = float(rng.uniform(config.virtual_bw_min, config.virtual_bw_max))
    return VInfRequest(nodes, edges, critical, config.r if critical else None, config.p,
                       name=f"req{slot}")


def arrival_slots(config: ScenarioConfig, seed: int) -> list[int]:
    """Slots holding an arrival, from geometric gaps (or Bernoulli trials)."""
    if config.arrival_rate <= 0.0 or config.horizon == 0:
        return []
    rng = _rng(seed, ARRIVALS)
    if config.arrival_mode == "bernoulli":
        return [t for t in range(config.horizon) if rng.random() < config.arrival_rate]
    out = []
    t = int(rng.geometric(config.arrival_rate)) - 1
    while t < config.horizon:
        out.append(t)
        t += int(rng.geometric(config.arrival_rate))
    return out


def lease_length(config: ScenarioConfig, seed: int, slot: int) -> int:
    return int(_rng(seed, LEASES, slot).geometric(config.departure_rate))


@lru_cache(maxsize=None)
def _backups_for(n: int, p: float, r: float) -> int:
    return min_backups(n, p, r) if n else 0


# -- simulation state ----------------------------------------------------------


@dataclass
class _Lease:
    id: str
    request: VInfRequest
    k: int
    ends: int
    mapping: dict[str, str]
    pool: str | None = None


@dataclass
class _Pool:
    id: str
    pool: BackupPool
    anchor_lease: str
    slot_hosts: list[str]
    backup_size: float
    l2_demand: float
    # hosts of the pool's critical nodes and backups; new critical nodes avoid them
    hosts: set[str] = field(default_factory=set)
    anchor_live: bool = True

    @property
    def lease_id(self) -> str:
        return f"{self.id}/shared"


@dataclass
class MetricsSeries:
    acceptance: list[float] = field(default_factory=list)
    admitted: list[int] = field(default_factory=list)
    cpu_primary: list[float] = field(default_factory=list)
    cpu_redundant: list[float] = field(default_factory=list)
    bw_primary: list[float] = field(default_factory=list)
    bw_redundant: list[float] = field(default_factory=list)
    backups: list[int] = field(default_factory=list)
    arrived_by_size: dict[str, int] = field(default_factory=dict)
    rejected_by_size: dict[str, int] = field(default_factory=dict)
    arrived: int = 0
    accepted: int = 0
    redundant_cpu_units: float = 0.0
    live_slots: int = 0
    drained: bool | None = None

    def series(self, metric: str) -> list[float]:
        return getattr(self, metric)

    def rejection_profile(self) -> dict[str, float]:
        """Rejection rate per bucket, e.g. '5c' for 5-node VInfs with critical nodes."""
        return {b: self.rejected_by_size.get(b, 0) / n for b, n in sorted(self.arrived_by_size.items()) if n}

    def redundant_cpu_per_vinf(self) -> float:
        return self.redundant_cpu_units / self.live_slots if self.live_slots else 0.0

    def summary(self) -> dict[str, float]:
        out = {"acceptance": self.accepted / self.arrived if self.arrived else 0.0}
        for m in METRICS[1:]:
            vals = self.series(m)
            out[m] = math.fsum(vals) / len(vals) if vals else 0.0
        out["redundant_cpu_per_vinf"] = self.redundant_cpu_per_vinf()
        return out


class Simulator:
    def __init__(self, config: ScenarioConfig) -> None:
        self.config = config
        self.net = generate_physical(config)
        self.initial = (dict(self.net.capacity), dict(self.net.link_capacity))
        self.leases: dict[str, _Lease] = {}
        self.pools: dict[str, _Pool] = {}
        self.metrics = MetricsSeries()
        self._cpu_total = math.fsum(self.net.capacity.values())
        self._bw_total = math.fsum(self.net.link_capacity.values())
        self._pool_seq = 0

    # -- embedding ---------------------------------------------------------------

    def _embed(self, req: VInfRequest, k: int, **kw: Any) -> tuple[EmbeddingSolution, Any]:
        names = kw.pop("names", None)
        exp = expand(req, k, names=names)
        overlap = self.config.noshare_overlap if self.config.policy == "noshare" else "assignment"
        problem = EmbeddingProblem(self.net.snapshot(), exp, overlap=overlap, **kw)
        return solve_embedding(problem), exp

    def _split(self, sol: EmbeddingSolution, exp: Any) -> tuple[Reservation, Reservation]:
        """(lease part, pool part): backup compute and L2 bandwidth go to the pool."""
        lease = Reservation(dict(sol.compute), {}, dict(sol.bandwidth), {})
        shared = Reservation({}, dict(sol.redundant_compute), {}, {})
        l2_keys = {k for k in sol.flows if k[0] == "L2"}
        l2_bw: dict[tuple[str, str], list[float]] = {}
        for key in l2_keys:
            for (i, j), val in sol.flows[key].items():
                if i[0] == "p" and j[0] == "p":
                    l2_bw.setdefault(self.net.link_key(i[1], j[1]), []).append(val)
        l2_total = {k: math.fsum(v) for k, v in l2_bw.items()}
        for key, val in sol.redundant_bandwidth.items():
            part = min(val, l2_total.get(key, 0.0))
            if part > 0:
                shared.redundant_bandwidth[key] = part
            if val - part > 0:
                lease.redundant_bandwidth[key] = val - part
        return lease, shared

    def _admit_standalone(self, lid: str, req: VInfRequest, k: int, ends: int) -> bool:
        try:
            sol, exp = self._embed(req, k)
        except EmbeddingInfeasible:
            return False
        lease = _Lease(lid, req, k, ends, dict(sol.mapping))
        if self.config.policy == "share" and k > 0:
            part, shared = self._split(sol, exp)
            self._pool_seq += 1
            pid = f"pool{self._pool_seq}"
            anchor = PoolMember(id=lid, n=len(req.critical), k=k, p=req.p, r=req.reliability,
                                f=independent_distribution(len(req.critical), req.p))
            pool = _Pool(pid, BackupPool(anchor), lid, [sol.mapping[b] for b in exp.backups],
                         exp.backup_demand, exp.l2_demand,
                         {sol.mapping[u] for u in (*req.critical, *exp.backups)})
            apply_reservation(self.net, lid, part)
            apply_reservation(self.net, pool.lease_id, shared)
            self.pools[pid] = pool
            lease.pool = pid
        else:
            apply_reservation(self.net, lid, sol.reservation())
        self.leases[lid] = lease
        return True

    def _try_pools(self, lid: str, req: VInfRequest, k: int, ends: int) -> bool:
        member = PoolMember(id=lid, n=len(req.critical), k=k, p=req.p, r=req.reliability,
                            f=independent_distribution(len(req.critical), req.p))
        open_pools = [p for p in self.pools.values() if p.anchor_live and p.pool.free_slots >= k]
        open_pools.sort(key=lambda p: (-p.pool.free_slots, p.id))
        for pool in open_pools:
            decision = pool.pool.evaluate(member)
            if not decision.admitted:
                continue
            names = backup_names(k, req.nodes)
            pinned = {b: pool.slot_hosts[s] for b, s in zip(names, decision.slots)}
            excluded = {c: pool.hosts for c in req.critical}
            need = max(req.nodes[c] for c in req.critical)
            l2_need = max_critical_pair_demand(req) if k > 1 else 0.0
            try:
                sol, _ = self._embed(
                    req, k, names=names, pinned=pinned, excluded=excluded,
                    backup_compute=max(0.0, need - pool.backup_size),
                    l2_demand=max(0.0, l2_need - pool.l2_demand),
                )
            except EmbeddingInfeasible:
                return False  # one pooled attempt per arrival
            pool.pool.admit(member)
            apply_reservation(self.net, lid, sol.reservation())
            pool.hosts |= set(sol.mapping[c] for c in req.critical)
            self.leases[lid] = _Lease(lid, req, k, ends, dict(sol.mapping), pool.id)
            return True
        return False

    def arrive(self, slot: int) -> bool:
        cfg = self.config
        req = generate_request(cfg, cfg.seed, slot)
        ends = slot + lease_length(cfg, cfg.seed, slot)
        lid = f"v{slot}"
        k = 0 if cfg.policy == "nonr" else _backups_for(len(req.critical), cfg.p, cfg.r)
        ok = False
        if cfg.policy == "share" and k > 0:
            ok = self._try_pools(lid, req, k, ends)
        if not ok:
            ok = self._admit_standalone(lid, req, k, ends)
        bucket = f"{len(req.nodes)}{'c' if req.critical else ''}"
        m = self.metrics
        m.arrived += 1
        m.arrived_by_size[bucket] = m.arrived_by_size.get(bucket, 0) + 1
        if ok:
            m.accepted += 1
        else:
            m.rejected_by_size[bucket] = m.rejected_by_size.get(bucket, 0) + 1
        return ok

    def depart(self, lid: str) -> None:
        lease = self.leases.pop(lid)
        release(self.net, lid)
        if lease.pool is None:
            return
        pool = self.pools[lease.pool]
        if lid == pool.anchor_lease:
            pool.anchor_live = False
        else:
            pool.pool.remove(lid)
        if not pool.anchor_live and not pool.pool.members:
            release(self.net, pool.lease_id)
            del self.pools[pool.id]

    # -- bookkeeping -------------------------------------------------------------

    def backup_count(self) -> int:
        if self.config.policy == "share":
            pooled = sum(p.pool.anchor.k for p in self.pools.values())
            return pooled
        return sum(lease.k for lease in self.leases.values())

    def record(self) -> None:
        m = self.metrics
        cpu_p, bw_p = self.net.used(redundant=False)
        cpu_r, bw_r = self.net.used(redundant=True)
        m.acceptance.append(m.accepted / m.arrived if m.arrived else 0.0)
        m.admitted.append(len(self.leases))
        m.cpu_primary.append(cpu_p / self._cpu_total if self._cpu_total else 0.0)
        m.cpu_redundant.append(cpu_r / self._cpu_total if self._cpu_total else 0.0)
        m.bw_primary.append(bw_p / self._bw_total if self._bw_total else 0.0)
        m.bw_redundant.append(bw_r / self._bw_total if self._bw_total else 0.0)
        m.backups.append(self.backup_count())
        m.redundant_cpu_units += cpu_r
        m.live_slots += len(self.leases)

    def check(self) -> None:
        """Capacity conservation and pool invariants at the current slot."""
        for node in self.net.capacity:
            assert self.net.residual_compute(node) >= -1e-6, node
        for key in self.net.link_capacity:
            assert self.net.residual_bandwidth(*key) >= -1e-6, key
        for pool in self.pools.values():
            pool.pool.check_invariants()

    def restored(self) -> bool:
        caps, links = self.initial
        return (not self.net.reservations
                and all(self.net.residual_compute(n) == caps[n] for n in caps)
                and all(self.net.residual_bandwidth(*k) == links[k] for k in links))

    def run(self) -> MetricsSeries:
        cfg = self.config
        arrivals = set(arrival_slots(cfg, cfg.seed))
        for t in range(cfg.horizon):
            self._departures(t)
            if t in arrivals:
                self.arrive(t)
            self.record()
            if cfg.check_every and t % cfg.check_every == 0:
                self.check()
        if cfg.drain:
            while self.leases:
                t = min(lease.ends for lease in self.leases.values())
                self._departures(t)
                if cfg.check_every:
                    self.check()
            self.metrics.drained = self.restored()
        return self.metrics

    def _departures(self, t: int) -> None:
        for lid in sorted((l.id for l in self.leases.values() if l.ends <= t), key=lambda s: int(s[1:])):
            self.depart(lid)


def run(config: ScenarioConfig) -> MetricsSeries:
    return Simulator(config).run()


# -- sweeps and CSV output -----------------------------------------------------


@dataclass(frozen=True)
class SweepGrid:
    base: ScenarioConfig
    policies: tuple[str, ...] = POLICIES
    parameter: str = "virtual_bw_max"
    values: tuple[float, ...] = (35.0,)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self) -> None:
        if not self.policies or not self.values or not self.seeds:
            raise SchemaError("sweep grid must be non-empty")
        if self.parameter not in {f.name for f in fields(ScenarioConfig)}:
            raise SchemaError(f"unknown sweep parameter {self.parameter!r}")

    def cells(self) -> list[tuple[str, Any, int, ScenarioConfig]]:
        return [
            (policy, value, seed, replace(self.base, policy=policy, seed=seed, **{self.parameter: value}))
            for value in self.values for policy in self.policies for seed in self.seeds
        ]

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SweepGrid:
        data = dict(data)
        base = ScenarioConfig.from_dict(data.pop("base", {}))
        sweep = data.pop("sweep", {})
        kw: dict[str, Any] = {"base": base}
        if "policies" in data:
            kw["policies"] = tuple(data.pop("policies"))
        if "seeds" in data:
            kw["seeds"] = tuple(int(s) for s in data.pop("seeds"))
        if sweep:
            kw["parameter"] = sweep["parameter"]
            kw["values"] = tuple(sweep["values"])
        else:
            kw["parameter"] = "virtual_bw_max"
            kw["values"] = (base.virtual_bw_max,)
        if data:
            raise SchemaError(f"unknown grid keys {sorted(data)}")
        return cls(**kw)


def _fmt(v: Any) -> str:
    return format(v, ".12g") if isinstance(v, float) else str(v)


@dataclass
class SweepReport:
    grid: SweepGrid
    runs: dict[tuple[str, Any, int], MetricsSeries]

    def aggregate(self) -> list[dict[str, Any]]:
        rows = []
        for value in self.grid.values:
            for policy in self.grid.policies:
                per_seed = [self.runs[(policy, value, s)].summary() for s in self.grid.seeds]
                for metric in per_seed[0]:
                    vals = np.array([d[metric] for d in per_seed])
                    rows.append({
                        "cell": f"{self.grid.parameter}={_fmt(value)}",
                        "policy": policy,
                        "metric": metric,
                        "mean": math.fsum(vals) / vals.size,
                        "std": float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0,
                    })
        return rows

    def mean(self, policy: str, value: Any, metric: str) -> tuple[float, float]:
        cell = f"{self.grid.parameter}={_fmt(value)}"
        for row in self.aggregate():
            if row["cell"] == cell and row["policy"] == policy and row["metric"] == metric:
                return row["mean"], row["std"]
        raise KeyError((policy, value, metric))

    def aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell", "policy", "metric", "mean", "std"])
        for row in self.aggregate():
            w.writerow([row["cell"], row["policy"], row["metric"], _fmt(row["mean"]), _fmt(row["std"])])
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        written = []
        for (policy, value, seed), m in self.runs.items():
            for metric in METRICS:
                path = out / metric / f"{policy}_{_fmt(value)}_{seed}.csv"
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(series_csv(m.series(metric)))
                written.append(path)
            prof = out / "rejection" / f"{policy}_{_fmt(value)}_{seed}.csv"
            prof.parent.mkdir(parents=True, exist_ok=True)
            prof.write_text("bucket,rate\n" + "".join(
                f"{b},{_fmt(v)}\n" for b, v in m.rejection_profile().items()))
            written.append(prof)
        agg = out / "aggregate.csv"
        agg.parent.mkdir(parents=True, exist_ok=True)
        agg.write_text(self.aggregate_csv())
        written.append(agg)
        return written


def series_csv(values: Iterable[float]) -> str:
    lines = ["slot,value"] + [f"{t},{_fmt(float(v))}" for t, v in enumerate(values)]
    return "\n".join(lines) + "\n"


def _run_cell(cfg: ScenarioConfig) -> MetricsSeries:
    return run(cfg)


def compare_policies(grid: SweepGrid, jobs: int = 1) -> SweepReport:
    cells = grid.cells()
    configs = [c[3] for c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, configs))
    else:
        results = [_run_cell(c) for c in configs]
    runs = {(p, v, s): m for (p, v, s, _), m in zip(cells, results)}
    return SweepReport(grid, runs)


def load_grid(path: str | Path) -> SweepGrid:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read config: {exc}") from exc
    if "base" in data or "sweep" in data or "policies" in data or "seeds" in data:
        return SweepGrid.from_dict(data)
    base = ScenarioConfig.from_dict(data)
    return SweepGrid(base, policies=(base.policy,), parameter="virtual_bw_max",
                     values=(base.virtual_bw_max,), seeds=(base.seed,))
