"""Reliability of n critical nodes backed by k shared backups.

All binomial terms are evaluated in log space so that instances with
n ~ 1e5 neither underflow nor lose the tail mass that decides r(k).
Reliabilities are computed as ``1 - unreliability`` where the
unreliability is summed directly from the failure tail; this keeps ten
or more significant digits for values close to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, gammaln

from vinfpool.errors import InfeasibleError

#: absolute slack when comparing a reliability against its target
PROB_TOL = 1e-12
#: largest backup total the search will consider; beyond it r is reported unreachable
MAX_TOTAL = 10**6


@dataclass(frozen=True, eq=False)
class FailureDistribution:
    """pmf of the number of simultaneously failed critical nodes.

    ``probs[x]`` is the probability that exactly ``x`` of the ``n``
    critical nodes are down.
    """

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float).ravel()
        if probs.size == 0:
            raise ValueError("a failure distribution needs at least one entry")
        if np.any(~np.isfinite(probs)) or np.any(probs < 0.0) or np.any(probs > 1.0):
            raise ValueError("failure probabilities must lie in [0, 1]")
        total = float(math.fsum(probs))
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"failure probabilities sum to {total!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def n(self) -> int:
        return self.probs.size - 1

    def __len__(self) -> int:
        return self.probs.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FailureDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())

    @classmethod
    def point_mass(cls, n: int, x: int) -> FailureDistribution:
        probs = np.zeros(n + 1)
        probs[x] = 1.0
        return cls(probs)

    def tolist(self) -> list[float]:
        return [float(v) for v in self.probs]


@dataclass(frozen=True)
class ReliabilityQuery:
    n: int
    p: float
    r: float
    f: FailureDistribution

    def __post_init__(self) -> None:
        validate_query(self.n, self.p, self.r, self.f)


def validate_query(n: int, p: float, r: float, f: FailureDistribution) -> None:
    if n < 0:
        raise ValueError("n must be non-negative")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r!r}")
    if f.n != n:
        raise ValueError(f"distribution covers {f.n} nodes, query has {n}")


def binomial_pmf(m: int, p: float) -> np.ndarray:
    """P(Binomial(m, p) = j) for j = 0..m, evaluated in log space."""
    if m < 0:
        raise ValueError("m must be non-negative")
    if p <= 0.0:
        out = np.zeros(m + 1)
        out[0] = 1.0
        return out
    if p >= 1.0:
        out = np.zeros(m + 1)
        out[m] = 1.0
        return out
    j = np.arange(m + 1, dtype=float)
    logc = gammaln(m + 1.0) - gammaln(j + 1.0) - gammaln(m - j + 1.0)
    return np.exp(logc + j * math.log(p) + (m - j) * math.log1p(-p))


def _upper_tail(pmf: np.ndarray) -> np.ndarray:
    """tail[j] = sum_{i >= j} pmf[i], with a trailing zero at j = len."""
    tail = np.zeros(pmf.size + 1)
    tail[:-1] = np.cumsum(pmf[::-1])[::-1]
    return tail


def regularized_incomplete_beta(q: float, a: int, b: int) -> float:
    """I_q(a, b), the Beta(a, b) CDF evaluated at q."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q!r}")
    if a < 1 or b < 1:
        raise ValueError("a and b must be positive")
    return float(betainc(a, b, q))


def reliability_independent(n: int, k: int, p: float) -> float:
    """r(k) when all n + k nodes fail independently with probability p."""
    if n < 0 or k < 0:
        raise ValueError("n and k must be non-negative")
    pmf = binomial_pmf(n + k, p)
    return 1.0 - float(math.fsum(pmf[k + 1:]))


def independent_distribution(n: int, p: float) -> FailureDistribution:
    if n < 0:
        raise ValueError("n must be non-negative")
    pmf = binomial_pmf(n, p)
    # renormalise away the last-ulp drift of exp(log pmf)
    return FailureDistribution(pmf / math.fsum(pmf))


def unreliability_general(k: int, p: float, f: FailureDistribution) -> float:
    """1 - r(k): probability that more nodes fail than there are backups."""
    if k < 0:
        raise ValueError("k must be non-negative")
    # P(Binomial(k, p) > k - x) for x = 0..n; certain loss once x > k
    tail = _upper_tail(binomial_pmf(k, p))
    x = np.arange(f.n + 1)
    idx = k - x + 1
    loss = np.ones(f.n + 1)
    ok = idx >= 1
    loss[ok] = tail[np.minimum(idx[ok], k + 1)]
    return float(math.fsum(f.probs * loss))


def reliability_general(k: int, p: float, f: FailureDistribution) -> float:
    """r(k) for an arbitrary critical-failure pmf f and i.i.d. backups."""
    return 1.0 - unreliability_general(k, p, f)


def _survive_worst_case(total: int, n: int, p: float) -> float:
    # P(at least n of `total` nodes survive) = 1 - P(Binomial(total, p) >= total - n + 1)
    if total < n:
        return 0.0
    return 1.0 - float(betainc(total - n + 1, n, p))


def k_max(n: int, p: float, r: float) -> int:
    """Smallest total K >= n with P(Binomial(K, p) <= K - n) >= r.

    This is the backup budget that suffices even when all n critical
    nodes are lost with certainty, hence an upper bound for any f.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return 0
    if p >= 1.0:
        raise InfeasibleError("no node ever survives when p = 1")

    def ok(total: int) -> bool:
        return _survive_worst_case(total, n, p) >= r - PROB_TOL

    if ok(n):
        return n
    lo, step = n, 1
    hi = n + step
    while not ok(hi):
        lo = hi
        step *= 2
        hi = n + step
        if hi > MAX_TOTAL:
            raise InfeasibleError(f"r={r} needs more than {MAX_TOTAL} nodes with p={p}")
    # ok(hi) holds, ok(lo) does not
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def min_backups(n: int, p: float, r: float, f: FailureDistribution | None = None) -> int:
    """Smallest k with r(k) >= r, by bisection over [0, k_max].

    ``f`` defaults to independent failures with probability ``p``.
    """
    if f is None:
        f = independent_distribution(n, p)
    validate_query(n, p, r, f)
    if n == 0:
        return 0

    def rel(k: int) -> float:
        return reliability_general(k, p, f)

    lo, hi = 0, k_max(n, p, r)
    if rel(hi) < r - PROB_TOL:
        raise InfeasibleError(f"r={r} unreachable with p={p} within k_max={hi}")
    while lo + 1 < hi:
        mid = -(-(lo + hi) // 2)
        if rel(mid) < r - PROB_TOL:
            lo = mid + 1
        else:
            hi = mid
    return hi if rel(lo) < r - PROB_TOL else lo
