"""Failure distributions f(x) from three cascading-failure models.

* load-based: closed-form quasi-binomial distribution of a round-based
  load-redistribution cascade;
* tree-based: stationary distribution of a CTMC over per-category
  up/down bits and an operating environment;
* degree-based: global-cascade probability on a random graph with
  random failure thresholds, turned into a worst-case two-point pmf.

``monte_carlo_distribution`` estimates the same pmfs by simulating the
underlying processes directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from vinfpool.errors import (
    ConvergenceError,
    ModelError,
    SingularChainError,
    StateSpaceTooLarge,
)
from vinfpool.reliability import FailureDistribution

MAX_STATES = 1 << 20
DENSE_STATES = 1 << 12
NEG_MASS_TOL = 1e-9


def _saturate(z: float) -> float:
    return min(max(z, 0.0), 1.0)


# ---------------------------------------------------------------------------
# load-based model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoadModelParams:
    """Raw load units; only the normalised (d_hat, p_hat) matter."""

    n: int
    l_min: float
    l_max: float
    l_fail: float
    d_disturb: float
    p_transfer: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ModelError("load model needs n >= 1")
        if not self.l_max > self.l_min:
            raise ModelError("l_max must exceed l_min")
        if self.p_hat < 0:
            raise ModelError("load transfer per failure must be non-negative")
        if self.d_hat < 0:
            raise ModelError(f"normalised disturbance {self.d_hat!r} is negative")

    @property
    def p_hat(self) -> float:
        return self.p_transfer / (self.l_max - self.l_min)

    @property
    def d_hat(self) -> float:
        return (self.d_disturb + self.l_max - self.l_fail) / (self.l_max - self.l_min)

    @classmethod
    def normalized(cls, n: int, d_hat: float, p_hat: float) -> LoadModelParams:
        """Loads uniform on [0, 1] with failure threshold 1."""
        return cls(n=n, l_min=0.0, l_max=1.0, l_fail=1.0, d_disturb=d_hat, p_transfer=p_hat)


def _load_term(n: int, x: int, d: float, p: float) -> float:
    # C(n,x) phi(d) (d + x p)^(x-1) phi(1 - d - x p)^(n-x), with 0^0 = 1, 0/0 = 1
    head = _saturate(d)
    base = d + x * p
    if x == 0:
        lead = 1.0 if d == 0.0 else head / d
    else:
        if head == 0.0:
            return 0.0
        lead = head * base ** (x - 1)
    tail_base = _saturate(1.0 - d - x * p)
    if tail_base == 0.0:
        return 0.0 if n - x > 0 else lead
    if lead == 0.0:
        return 0.0
    log_term = (
        math.lgamma(n + 1) - math.lgamma(x + 1) - math.lgamma(n - x + 1)
        + math.log(lead) + (n - x) * math.log(tail_base)
    )
    return math.exp(log_term)


def load_based_distribution(params: LoadModelParams) -> FailureDistribution:
    n, d, p = params.n, params.d_hat, params.p_hat
    probs = np.array([_load_term(n, x, d, p) for x in range(n)] + [0.0])
    rest = 1.0 - math.fsum(probs[:n])
    if rest < -NEG_MASS_TOL:
        raise ModelError(f"load model assigns negative mass {rest!r} to x = n")
    probs[n] = min(max(rest, 0.0), 1.0)
    return FailureDistribution(probs / math.fsum(probs))


def simulate_load_cascades(params: LoadModelParams, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Number of failed nodes in each of ``trials`` independent cascades."""
    n = params.n
    loads = rng.uniform(params.l_min, params.l_max, size=(trials, n)) + params.d_disturb
    failed = loads > params.l_fail
    count = failed.sum(axis=1)
    new = count.copy()
    while np.any(new > 0):
        loads = loads + (new * params.p_transfer)[:, None]
        now = failed | (loads > params.l_fail)
        new = now.sum(axis=1) - count
        failed = now
        count = count + new
    return count


# ---------------------------------------------------------------------------
# tree-based (CTMC) model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeModelParams:
    """Rates of a CTMC with one node per category.

    ``cascade_rates[i][j]`` is the extra failure rate that a down node of
    category i imposes on category j. ``fail_rates`` and ``repair_rates``
    are indexed ``[category][environment]``. The environment advances
    cyclically, ``e -> e + 1 (mod E)``, at rate ``env_rates[e]``.
    """

    cascade_rates: np.ndarray
    fail_rates: np.ndarray
    repair_rates: np.ndarray
    env_rates: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self) -> None:
        phi = np.atleast_2d(np.asarray(self.cascade_rates, dtype=float))
        lam = np.asarray(self.fail_rates, dtype=float)
        mu = np.asarray(self.repair_rates, dtype=float)
        nu = np.atleast_1d(np.asarray(self.env_rates, dtype=float))
        n = phi.shape[0]
        if lam.ndim == 1:
            lam = lam[:, None]
        if mu.ndim == 1:
            mu = mu[:, None]
        if phi.shape != (n, n):
            raise ModelError("cascade_rates must be square")
        if lam.shape != (n, nu.size) or mu.shape != (n, nu.size):
            raise ModelError("fail/repair rates must be shaped (categories, environments)")
        for arr in (phi, lam, mu, nu):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ModelError("rates must be finite and non-negative")
        if np.any(lam <= 0) or np.any(mu <= 0):
            raise ModelError("fail and repair rates must be strictly positive")
        object.__setattr__(self, "cascade_rates", phi)
        object.__setattr__(self, "fail_rates", lam)
        object.__setattr__(self, "repair_rates", mu)
        object.__setattr__(self, "env_rates", nu)

    @property
    def n(self) -> int:
        return self.cascade_rates.shape[0]

    @property
    def environments(self) -> int:
        return self.env_rates.size

    @property
    def n_states(self) -> int:
        return self.environments << self.n


def tree_generator(params: TreeModelParams) -> sp.csr_matrix:
    """Generator Q over states ``e * 2**n + bits``; bit i set = category i down."""
    n, n_env = params.n, params.environments
    size = params.n_states
    if size > MAX_STATES:
        raise StateSpaceTooLarge(f"{size} CTMC states exceed the cap of {MAX_STATES}")
    phi, lam, mu, nu = params.cascade_rates, params.fail_rates, params.repair_rates, params.env_rates
    rows, cols, vals = [], [], []
    bits = np.arange(1 << n)
    down = (bits[:, None] >> np.arange(n)) & 1  # (2^n, n)
    cascade_in = down @ phi  # extra failure rate onto each category
    for e in range(n_env):
        offset = e << n
        for i in range(n):
            up_states = bits[down[:, i] == 0]
            rate = lam[i, e] + cascade_in[up_states, i]
            rows.append(offset + up_states)
            cols.append(offset + (up_states | (1 << i)))
            vals.append(rate)
            dn_states = bits[down[:, i] == 1]
            rows.append(offset + dn_states)
            cols.append(offset + (dn_states & ~(1 << i)))
            vals.append(np.full(dn_states.size, mu[i, e]))
        if n_env > 1 and nu[e] > 0:
            nxt = ((e + 1) % n_env) << n
            rows.append(offset + bits)
            cols.append(nxt + bits)
            vals.append(np.full(bits.size, nu[e]))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    keep = v > 0
    off = sp.coo_matrix((v[keep], (r[keep], c[keep])), shape=(size, size)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsr()


def stationary_distribution(q: sp.spmatrix) -> np.ndarray:
    """Solve pi^T Q = 0 with sum(pi) = 1 for an irreducible generator."""
    size = q.shape[0]
    off = q - sp.diags(q.diagonal())
    n_comp, _ = connected_components(off, directed=True, connection="strong")
    if n_comp != 1:
        raise SingularChainError(f"chain is reducible ({n_comp} strongly connected classes)")
    a = q.T.tolil()
    a[size - 1, :] = np.ones(size)
    b = np.zeros(size)
    b[-1] = 1.0
    try:
        if size <= DENSE_STATES:
            pi = np.linalg.solve(a.toarray(), b)
        else:
            pi = spsolve(a.tocsc(), b)
    except np.linalg.LinAlgError as exc:
        raise SingularChainError(str(exc)) from exc
    if not np.all(np.isfinite(pi)):
        raise SingularChainError("stationary solve returned non-finite values")
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    if np.any(pi < -1e-10):
        raise SingularChainError("stationary solve returned negative mass")
    pi = np.clip(pi, 0.0, None)
    return pi / math.fsum(pi)


def tree_based_distribution(params: TreeModelParams) -> FailureDistribution:
    q = tree_generator(params)
    pi = stationary_distribution(q)
    n = params.n
    popcount = np.array([bin(s & ((1 << n) - 1)).count("1") for s in range(params.n_states)])
    probs = np.bincount(popcount, weights=pi, minlength=n + 1)
    return FailureDistribution(probs / math.fsum(probs))


def simulate_ctmc_states(
    q: sp.spmatrix, start: int, horizon: float, trials: int, rng: np.random.Generator
) -> np.ndarray:
    """State occupied at time ``horizon`` by each of ``trials`` chains."""
    dense = q.toarray()
    exit_rate = -np.diag(dense).copy()
    jump = np.where(np.eye(len(dense), dtype=bool), 0.0, dense)
    with np.errstate(invalid="ignore", divide="ignore"):
        jump = jump / exit_rate[:, None]
    cum = np.cumsum(np.nan_to_num(jump), axis=1)
    state = np.full(trials, start)
    clock = np.zeros(trials)
    active = np.ones(trials, dtype=bool)
    while np.any(active):
        idx = np.flatnonzero(active)
        rate = exit_rate[state[idx]]
        clock[idx] += rng.exponential(1.0, idx.size) / rate
        done = clock[idx] > horizon
        active[idx[done]] = False
        move = idx[~done]
        if move.size:
            u = rng.random(move.size)[:, None]
            state[move] = np.argmax(u < cum[state[move]], axis=1)
    return state


# ---------------------------------------------------------------------------
# degree-based model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DegreeModelParams:
    """Degree pmf over d = 0..d_max and a threshold pmf on a grid in (0, 1]."""

    degree_dist: np.ndarray
    threshold_values: np.ndarray
    threshold_probs: np.ndarray
    n: int

    def __post_init__(self) -> None:
        pd = np.asarray(self.degree_dist, dtype=float)
        tv = np.asarray(self.threshold_values, dtype=float)
        tp = np.asarray(self.threshold_probs, dtype=float)
        for name, arr in (("degree", pd), ("threshold", tp)):
            if np.any(arr < 0) or abs(math.fsum(arr) - 1.0) > 1e-9:
                raise ModelError(f"{name} pmf must be non-negative and sum to 1")
        if tv.shape != tp.shape:
            raise ModelError("threshold values and probabilities differ in length")
        if np.any(tv <= 0) or np.any(tv > 1):
            raise ModelError("thresholds must lie in (0, 1]")
        if float(np.arange(pd.size) @ pd) <= 0:
            raise ModelError("average degree must be positive")
        if self.n < 1:
            raise ModelError("n must be positive")
        object.__setattr__(self, "degree_dist", pd)
        object.__setattr__(self, "threshold_values", tv)
        object.__setattr__(self, "threshold_probs", tp)

    @property
    def mean_degree(self) -> float:
        return float(np.arange(self.degree_dist.size) @ self.degree_dist)

    @classmethod
    def with_threshold_density(cls, degree_dist, density, n: int, points: int = 1000) -> DegreeModelParams:
        """Discretise a threshold density on ``points`` midpoints of (0, 1]."""
        edges = np.linspace(0.0, 1.0, points + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        w = np.array([density(m) for m in mids], dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ModelError("threshold density must be non-negative and not identically zero")
        return cls(degree_dist, edges[1:], w / w.sum(), n)

    @classmethod
    def fixed_threshold(cls, degree_dist, phi: float, n: int) -> DegreeModelParams:
        return cls(degree_dist, np.array([phi]), np.array([1.0]), n)


def vulnerability(params: DegreeModelParams) -> np.ndarray:
    """rho_d: probability a degree-d node fails after one failed neighbour."""
    d = np.arange(params.degree_dist.size)
    rho = np.ones(d.size)
    for deg in d[1:]:
        rho[deg] = params.threshold_probs[params.threshold_values <= 1.0 / deg + 1e-12].sum()
    return rho


def degree_cascade_condition(params: DegreeModelParams) -> bool:
    d = np.arange(params.degree_dist.size)
    rho = vulnerability(params)
    return params.mean_degree < float(np.sum(d * (d - 1) * rho * params.degree_dist))


def _solve_h1(g1, g1_at_one: float, damping: float = 0.5, tol: float = 1e-12, cap: int = 100_000) -> float:
    h = 0.0
    for _ in range(cap):
        nxt = damping * h + (1.0 - damping) * (1.0 - g1_at_one + g1(h))
        if abs(nxt - h) < tol:
            return nxt
        h = nxt
    raise ConvergenceError(f"H1 fixed point did not converge in {cap} iterations")


def degree_cascade_probability(params: DegreeModelParams) -> float:
    """Probability that a single initial failure triggers a global cascade."""
    if not degree_cascade_condition(params):
        return 0.0
    pd = params.degree_dist
    d = np.arange(pd.size)
    coef = vulnerability(params) * pd
    z = params.mean_degree

    def g0(s: float) -> float:
        return float(np.sum(coef * s ** d))

    def g1(s: float) -> float:
        return float(np.sum(d[1:] * coef[1:] * s ** (d[1:] - 1))) / z

    h1 = _solve_h1(g1, g1(1.0))
    base = 1.0 - g0(1.0) + g0(h1)
    prob = float(np.sum((1.0 - base ** d) * pd))
    return min(max(prob, 0.0), 1.0)


def degree_worst_case_distribution(params: DegreeModelParams) -> FailureDistribution:
    n = params.n
    f_all = degree_cascade_probability(params)
    probs = np.zeros(n + 1)
    probs[n] = f_all
    probs[n - 1] += 1.0 - f_all
    return FailureDistribution(probs)


def _random_degree_graph(params: DegreeModelParams, rng: np.random.Generator) -> nx.Graph:
    pd = params.degree_dist
    degrees = rng.choice(pd.size, size=params.n, p=pd)
    if degrees.sum() % 2:
        i = int(rng.integers(params.n))
        degrees[i] += 1 if degrees[i] == 0 or rng.random() < 0.5 else -1
    g = nx.configuration_model(degrees.tolist(), seed=int(rng.integers(2**32)))
    g = nx.Graph(g)
    g.remove_edges_from(nx.selfloop_edges(g))
    return g


def simulate_degree_cascade(params: DegreeModelParams, rng: np.random.Generator) -> int:
    """One threshold cascade started from a single random failure."""
    g = _random_degree_graph(params, rng)
    n = params.n
    thresholds = rng.choice(params.threshold_values, size=n, p=params.threshold_probs)
    failed = np.zeros(n, dtype=bool)
    failed[int(rng.integers(n))] = True
    changed = True
    while changed:
        changed = False
        for v in range(n):
            if failed[v]:
                continue
            deg = g.degree[v]
            if deg == 0:
                continue
            hit = sum(failed[u] for u in g.neighbors(v))
            if hit / deg >= thresholds[v]:
                failed[v] = True
                changed = True
    return int(failed.sum())


# ---------------------------------------------------------------------------
# Monte-Carlo estimation
# ---------------------------------------------------------------------------

CascadeParams = Union[LoadModelParams, TreeModelParams, DegreeModelParams]

_BLOCK = 65_536


def _default_horizon(params: TreeModelParams) -> float:
    rates = np.concatenate(
        [params.fail_rates.ravel(), params.repair_rates.ravel(), params.env_rates[params.env_rates > 0]]
    )
    return 20.0 / float(rates.min())


def monte_carlo_distribution(
    model: CascadeParams, trials: int, seed: int, horizon: float | None = None
) -> FailureDistribution:
    """Empirical pmf of the number of failed nodes over seeded trials.

    Trials run in fixed-size blocks, each with its own generator spawned
    from ``seed``; the output is independent of how blocks are scheduled.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    n = model.n
    blocks = -(-trials // _BLOCK)
    streams = np.random.SeedSequence(seed).spawn(blocks)
    counts = np.zeros(n + 1)
    if isinstance(model, TreeModelParams):
        q = tree_generator(model)
        t_end = _default_horizon(model) if horizon is None else horizon
        popcount = np.array([bin(s & ((1 << n) - 1)).count("1") for s in range(model.n_states)])
    for b, ss in enumerate(streams):
        size = min(_BLOCK, trials - b * _BLOCK)
        rng = np.random.default_rng(ss)
        if isinstance(model, LoadModelParams):
            x = simulate_load_cascades(model, size, rng)
        elif isinstance(model, TreeModelParams):
            x = popcount[simulate_ctmc_states(q, 0, t_end, size, rng)]
        elif isinstance(model, DegreeModelParams):
            x = np.array([simulate_degree_cascade(model, rng) for _ in range(size)])
        else:
            raise TypeError(f"unsupported model {type(model).__name__}")
        counts += np.bincount(x, minlength=n + 1)
    return FailureDistribution(counts / trials)
