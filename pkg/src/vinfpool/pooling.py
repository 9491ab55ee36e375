"""Opportunistic redundancy pooling.

An anchor VInf (VInf-0) owns k0 backup slots and lends disjoint groups of
them to member VInfs. Each member keeps exactly the k_i slots it needs for
its own guarantee, so members are never worse off; the anchor's pooled
reliability is re-evaluated from the convolution of the members' slot-usage
pmfs, and a member is admitted only while that value stays at or above the
anchor's target.

Member pmfs are kept as cached forward transforms at a fixed power-of-two
length so that admitting one more member costs a single FFT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from vinfpool.errors import LengthError, MemberNotFound, PoolInvariantError
from vinfpool.reliability import (
    PROB_TOL,
    FailureDistribution,
    binomial_pmf,
    independent_distribution,
    min_backups,
)

ROUNDOFF_TOL = 1e-9


@dataclass(frozen=True)
class PoolMember:
    id: str
    n: int
    k: int
    p: float
    r: float
    f: FailureDistribution

    def __post_init__(self) -> None:
        if self.k < 0 or self.n < 0:
            raise ValueError("n and k must be non-negative")
        if self.f.n != self.n:
            raise ValueError("failure distribution does not match n")

    @classmethod
    def sized(cls, id: str, n: int, p: float, r: float, f: FailureDistribution | None = None) -> PoolMember:
        """A member carrying exactly its standalone backup requirement."""
        if f is None:
            f = independent_distribution(n, p)
        return cls(id=id, n=n, k=min_backups(n, p, r, f), p=p, r=r, f=f)

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "n": self.n, "k": self.k, "p": self.p, "r": self.r, "f": self.f.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PoolMember:
        f = data.get("f")
        dist = FailureDistribution(f) if f is not None else independent_distribution(data["n"], data["p"])
        return cls(id=str(data["id"]), n=int(data["n"]), k=int(data["k"]), p=float(data["p"]),
                   r=float(data["r"]), f=dist)


def total_failure_pmf(k: int, p: float, f: FailureDistribution) -> np.ndarray:
    """z(k, y) for y = 0..n+k: total failures among n critical and k backups."""
    return np.convolve(f.probs, binomial_pmf(k, p))


def z_vinf(k: int, y: int, n: int, p: float, f: FailureDistribution) -> float:
    if f.n != n:
        raise ValueError("failure distribution does not match n")
    if not 0 <= y <= n + k:
        raise ValueError(f"y={y} outside [0, {n + k}]")
    return float(total_failure_pmf(k, p, f)[y])


def member_usage_pmf(m: PoolMember) -> np.ndarray:
    """pmf over x = 0..k_i of lent slots that are down or taken by the member."""
    z = total_failure_pmf(m.k, m.p, m.f)
    q = np.zeros(m.k + 1)
    q[: m.k] = z[: m.k]
    q[m.k] = math.fsum(z[m.k:])
    return q


def transform_length(k0: int) -> int:
    return 1 << max(0, math.ceil(math.log2(k0 + 1)))


def _finish(raw: np.ndarray, support: int) -> np.ndarray:
    if np.any(raw < -ROUNDOFF_TOL) or np.any(raw > 1.0 + ROUNDOFF_TOL):
        raise ArithmeticError("spectral convolution round-off exceeds tolerance")
    return np.clip(raw[:support], 0.0, 1.0)


def convolve_members(members: list[np.ndarray], length: int) -> np.ndarray:
    """pmf of the summed slot usage, via a length-``length`` real FFT."""
    need = sum(len(q) - 1 for q in members) + 1
    if length < need:
        raise LengthError(f"transform length {length} < {need} would alias")
    spectrum = np.ones(length // 2 + 1, dtype=complex)
    for q in members:
        spectrum *= np.fft.rfft(q, length)
    return _finish(np.fft.irfft(spectrum, length), length)


def _anchor_loss(anchor: PoolMember, lent: int, q: np.ndarray) -> float:
    # 1 - r0' = sum_x Q(x) * P(more than k0 - x failures in VInf-0 with k0 - k' own backups)
    z0 = total_failure_pmf(anchor.k - lent, anchor.p, anchor.f)
    tail = np.concatenate([np.cumsum(z0[::-1])[::-1], [0.0]])
    terms = []
    for x in range(min(lent, q.size - 1) + 1):
        first_bad = anchor.k - x + 1
        terms.append(q[x] * (tail[first_bad] if first_bad < tail.size else 0.0))
    return math.fsum(terms)


@dataclass
class AdmitDecision:
    admitted: bool
    reliability: float
    slots: list[int] = field(default_factory=list)
    reason: str = ""


class BackupPool:
    """Anchor VInf plus members borrowing its backup slots.

    Mutations (``admit``/``remove``) must be serialised by the caller;
    reads between mutations are safe.
    """

    def __init__(self, anchor: PoolMember) -> None:
        self.anchor = anchor
        self.members: dict[str, PoolMember] = {}
        self.slots: list[str | None] = [None] * anchor.k
        self._length = transform_length(anchor.k)
        self._spectra: dict[str, np.ndarray] = {}

    # -- derived state ------------------------------------------------------

    @property
    def lent(self) -> int:
        return sum(m.k for m in self.members.values())

    @property
    def free_slots(self) -> int:
        return self.anchor.k - self.lent

    @property
    def length(self) -> int:
        return self._length

    def _spectrum(self, m: PoolMember) -> np.ndarray:
        return np.fft.rfft(member_usage_pmf(m), self._length)

    def _usage(self, spectra: list[np.ndarray], lent: int) -> np.ndarray:
        if lent + 1 > self._length:
            raise LengthError("lent slots exceed transform length")
        prod = np.ones(self._length // 2 + 1, dtype=complex)
        for s in spectra:
            prod = prod * s
        return _finish(np.fft.irfft(prod, self._length), lent + 1)

    def usage_pmf(self) -> np.ndarray:
        """Q(x): pmf of lent slots unavailable to the anchor."""
        return self._usage(list(self._spectra.values()), self.lent)

    def reliability(self) -> float:
        return 1.0 - _anchor_loss(self.anchor, self.lent, self.usage_pmf())

    def standalone_reliability(self) -> float:
        return 1.0 - _anchor_loss(self.anchor, 0, np.ones(1))

    # -- admission control --------------------------------------------------

    def evaluate(self, candidate: PoolMember) -> AdmitDecision:
        """Decide admission of ``candidate`` without mutating the pool."""
        current = self.reliability()
        if candidate.id in self.members or candidate.id == self.anchor.id:
            return AdmitDecision(False, current, reason="duplicate")
        if candidate.k > self.free_slots:
            return AdmitDecision(False, current, reason="slots")
        lent = self.lent + candidate.k
        spec = self._spectrum(candidate)
        q = self._usage([*self._spectra.values(), spec], lent)
        r_new = 1.0 - _anchor_loss(self.anchor, lent, q)
        if r_new < self.anchor.r - PROB_TOL:
            return AdmitDecision(False, current, reason="reliability")
        free = [i for i, owner in enumerate(self.slots) if owner is None][: candidate.k]
        return AdmitDecision(True, r_new, slots=free)

    def admit(self, candidate: PoolMember) -> AdmitDecision:
        decision = self.evaluate(candidate)
        if decision.admitted:
            for i in decision.slots:
                self.slots[i] = candidate.id
            self.members[candidate.id] = candidate
            self._spectra[candidate.id] = self._spectrum(candidate)
        return decision

    def remove(self, member_id: str) -> float:
        """Return the member's slots to the anchor; yields the new r0'."""
        if member_id not in self.members:
            raise MemberNotFound(member_id)
        del self.members[member_id]
        del self._spectra[member_id]
        self.slots = [None if owner == member_id else owner for owner in self.slots]
        return self.reliability()

    def slots_of(self, member_id: str) -> list[int]:
        return [i for i, owner in enumerate(self.slots) if owner == member_id]

    # -- invariants and persistence -----------------------------------------

    def check_invariants(self) -> None:
        if self.lent > self.anchor.k:
            raise PoolInvariantError(f"lent {self.lent} slots out of {self.anchor.k}")
        if len(self.slots) != self.anchor.k:
            raise PoolInvariantError("slot table does not match k0")
        for mid, m in self.members.items():
            held = self.slots.count(mid)
            if held != m.k:
                raise PoolInvariantError(f"member {mid} holds {held} slots, needs {m.k}")
        strays = {o for o in self.slots if o is not None} - set(self.members)
        if strays:
            raise PoolInvariantError(f"slots assigned to unknown members {sorted(strays)}")
        r0 = self.reliability()
        if r0 < self.anchor.r - PROB_TOL:
            raise PoolInvariantError(f"pooled reliability {r0!r} below guarantee {self.anchor.r!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "anchor": self.anchor.to_dict(),
            "members": [m.to_dict() for m in self.members.values()],
            "slots": list(self.slots),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> BackupPool:
        pool = cls(PoolMember.from_dict(data["anchor"]))
        for md in data.get("members", []):
            m = PoolMember.from_dict(md)
            pool.members[m.id] = m
            pool._spectra[m.id] = pool._spectrum(m)
        slots = data.get("slots")
        if slots is not None:
            pool.slots = [None if s is None else str(s) for s in slots]
        else:
            cursor = 0
            for m in pool.members.values():
                for _ in range(m.k):
                    if cursor < len(pool.slots):
                        pool.slots[cursor] = m.id
                    cursor += 1
        return pool


def pooled_reliability(pool: BackupPool) -> float:
    return pool.reliability()


def admit(pool: BackupPool, candidate: PoolMember) -> AdmitDecision:
    return pool.admit(candidate)


def remove(pool: BackupPool, member_id: str) -> BackupPool:
    pool.remove(member_id)
    return pool
