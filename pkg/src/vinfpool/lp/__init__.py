"""Linear programs: container, solvers and MPS export."""

from __future__ import annotations

from vinfpool.lp.highs import solve_highs
from vinfpool.lp.model import (
    EQ,
    GE,
    INFEASIBLE,
    ITERATION_LIMIT,
    LE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    LpSolution,
)
from vinfpool.lp.mps import emit_mps
from vinfpool.lp.simplex import DEFAULT_MAX_PIVOTS, solve_simplex

BACKENDS = ("simplex", "highs")


def solve(lp: LinearProgram, relax_integrality: bool = True, backend: str = "simplex",
          max_pivots: int = DEFAULT_MAX_PIVOTS) -> LpSolution:
    """Solve ``lp``; integrality is honoured only by the HiGHS backend.

    The built-in simplex has no branch-and-bound, so it refuses programs
    with integer variables unless ``relax_integrality`` is set.
    """
    if backend == "highs":
        return solve_highs(lp, relax_integrality=relax_integrality)
    if backend != "simplex":
        raise ValueError(f"unknown backend {backend!r}")
    if not relax_integrality and any(v.integer for v in lp.variables):
        raise ValueError("the built-in simplex solves relaxations only")
    return solve_simplex(lp, max_pivots=max_pivots)


__all__ = [
    "EQ", "GE", "LE", "OPTIMAL", "INFEASIBLE", "UNBOUNDED", "ITERATION_LIMIT",
    "LinearProgram", "LpSolution", "emit_mps", "solve", "solve_highs", "solve_simplex",
]
