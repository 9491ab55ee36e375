"""Sparse linear-program container."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import sparse

LE, EQ, GE = "<=", "=", ">="
SENSES = (LE, EQ, GE)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"

FEAS_TOL = 1e-6


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    integer: bool = False


@dataclass
class Constraint:
    cols: list[int]
    vals: list[float]
    sense: str
    rhs: float
    name: str


class LinearProgram:
    """min c.x subject to sparse rows and simple bounds lb <= x <= ub, lb >= 0."""

    def __init__(self) -> None:
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self._names: dict[str, int] = {}

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_rows(self) -> int:
        return len(self.constraints)

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                integer: bool = False, cost: float = 0.0) -> int:
        if name in self._names:
            raise ValueError(f"duplicate variable name {name!r}")
        if not (lb >= 0.0 and math.isfinite(lb)):
            raise ValueError(f"variable {name!r}: lower bound must be finite and >= 0")
        if ub < lb:
            raise ValueError(f"variable {name!r}: upper bound below lower bound")
        idx = len(self.variables)
        self.variables.append(Variable(name, float(lb), float(ub), integer))
        self._names[name] = idx
        if cost:
            self.objective[idx] = float(cost)
        return idx

    def index(self, name: str) -> int:
        return self._names[name]

    def set_bounds(self, idx: int, lb: float, ub: float) -> None:
        if not (0.0 <= lb <= ub):
            raise ValueError("bounds must satisfy 0 <= lb <= ub")
        var = self.variables[idx]
        var.lb, var.ub = float(lb), float(ub)

    def add_row(self, terms: Iterable[tuple[int, float]], sense: str, rhs: float,
                name: str | None = None) -> int:
        if sense not in SENSES:
            raise ValueError(f"unknown relation {sense!r}")
        merged: dict[int, float] = {}
        for j, a in terms:
            if not 0 <= j < len(self.variables):
                raise IndexError(f"row references undeclared variable {j}")
            merged[j] = merged.get(j, 0.0) + float(a)
        cols = [j for j, a in merged.items() if a != 0.0]
        vals = [merged[j] for j in cols]
        row = len(self.constraints)
        self.constraints.append(Constraint(cols, vals, sense, float(rhs), name or f"r{row}"))
        return row

    def set_cost(self, idx: int, cost: float) -> None:
        if cost:
            self.objective[idx] = float(cost)
        else:
            self.objective.pop(idx, None)

    # -- array views ----------------------------------------------------------

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.num_vars)
        for j, v in self.objective.items():
            c[j] = v
        return c

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        return lb, ub

    def matrix(self, rows: list[int] | None = None) -> sparse.csr_matrix:
        rows = range(self.num_rows) if rows is None else rows
        indptr, indices, data = [0], [], []
        for i in rows:
            con = self.constraints[i]
            indices.extend(con.cols)
            data.extend(con.vals)
            indptr.append(len(indices))
        return sparse.csr_matrix(
            (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr)),
            shape=(len(indptr) - 1, self.num_vars),
        )

    def objective_value(self, x: np.ndarray) -> float:
        return math.fsum(v * x[j] for j, v in self.objective.items())

    def max_violation(self, x: np.ndarray) -> float:
        """Largest absolute violation of any row or bound at ``x``."""
        worst = 0.0
        lb, ub = self.bounds()
        if x.size:
            worst = max(worst, float(np.max(lb - x, initial=0.0)), float(np.max(x - ub, initial=0.0)))
        for con in self.constraints:
            lhs = math.fsum(a * x[j] for j, a in zip(con.cols, con.vals))
            if con.sense == LE:
                worst = max(worst, lhs - con.rhs)
            elif con.sense == GE:
                worst = max(worst, con.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - con.rhs))
        return worst


@dataclass
class LpSolution:
    status: str
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = math.nan
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL
