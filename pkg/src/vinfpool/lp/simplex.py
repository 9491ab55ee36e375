"""Dense two-phase primal simplex on a full tableau.

Meant for small programs and as an independent cross-check of the HiGHS
backend. Pricing is Dantzig (most negative reduced cost) and switches to
Bland's rule once ``bland_after`` pivots have been made, which rules out
cycling. The leaving row is chosen by the minimum ratio with ties broken
by the smallest basic variable index, so the whole path is deterministic.
"""

from __future__ import annotations

import math

import numpy as np

from vinfpool.lp.model import (
    EQ,
    FEAS_TOL,
    GE,
    INFEASIBLE,
    ITERATION_LIMIT,
    LE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    LpSolution,
)

REDUCED_COST_TOL = 1e-9
PIVOT_TOL = 1e-11
DEFAULT_MAX_PIVOTS = 10**6
DEFAULT_BLAND_AFTER = 10**4


class _Tableau:
    def __init__(self, a: np.ndarray, b: np.ndarray, basis: list[int]) -> None:
        m, n = a.shape
        self.t = np.zeros((m + 1, n + 1))
        self.t[:m, :n] = a
        self.t[:m, n] = b
        self.basis = basis
        self.pivots = 0

    def set_cost(self, c: np.ndarray) -> None:
        """Load cost vector c and price out the current basis."""
        m = len(self.basis)
        self.t[m, :] = 0.0
        self.t[m, : c.size] = c
        for i, j in enumerate(self.basis):
            if self.t[m, j] != 0.0:
                self.t[m, :] -= self.t[m, j] * self.t[i, :]

    def pivot(self, r: int, e: int) -> None:
        t = self.t
        t[r, :] /= t[r, e]
        col = t[:, e].copy()
        col[r] = 0.0
        nz = np.nonzero(col)[0]
        if nz.size:
            t[nz, :] -= np.outer(col[nz], t[r, :])
        t[:, e] = 0.0
        t[r, e] = 1.0
        self.basis[r] = e
        self.pivots += 1

    def run(self, allowed: int, max_pivots: int, bland_after: int) -> str:
        """Optimise over the first ``allowed`` columns."""
        m = len(self.basis)
        t = self.t
        while True:
            rc = t[m, :allowed]
            if self.pivots >= bland_after:
                cand = np.nonzero(rc < -REDUCED_COST_TOL)[0]
                if cand.size == 0:
                    return OPTIMAL
                e = int(cand[0])
            else:
                e = int(np.argmin(rc))
                if rc[e] >= -REDUCED_COST_TOL:
                    return OPTIMAL
            if self.pivots >= max_pivots:
                return ITERATION_LIMIT
            col = t[:m, e]
            rows = np.nonzero(col > PIVOT_TOL)[0]
            if rows.size == 0:
                return UNBOUNDED
            ratios = t[rows, -1] / col[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(min(tied, key=lambda i: self.basis[i]))
            self.pivot(r, e)


def solve_simplex(lp: LinearProgram, max_pivots: int = DEFAULT_MAX_PIVOTS,
                  bland_after: int = DEFAULT_BLAND_AFTER) -> LpSolution:
    n = lp.num_vars
    lb, ub = lp.bounds()
    c = lp.cost_vector()

    # shift x = lb + y so that y >= 0, and turn finite upper bounds into rows
    rows: list[tuple[np.ndarray, str, float]] = []
    for con in lp.constraints:
        a = np.zeros(n)
        a[con.cols] = con.vals
        rows.append((a, con.sense, con.rhs - float(a @ lb)))
    for j in range(n):
        if math.isfinite(ub[j]):
            a = np.zeros(n)
            a[j] = 1.0
            rows.append((a, LE, ub[j] - lb[j]))

    m = len(rows)
    n_slack = sum(1 for _, s, _ in rows if s != EQ)
    n_art = sum(1 for _, s, rhs in rows if not (s == LE and rhs >= 0) and not (s == GE and rhs < 0))
    width = n + n_slack + n_art
    a_mat = np.zeros((m, width))
    b = np.zeros(m)
    basis: list[int] = []
    slack = n
    art = n + n_slack
    for i, (a, sense, rhs) in enumerate(rows):
        sign = 1.0
        if rhs < 0:
            sign = -1.0
        a_mat[i, :n] = sign * a
        b[i] = sign * rhs
        if sense != EQ:
            # slack enters with +1 for <= rows, -1 for >= rows, before the sign flip
            a_mat[i, slack] = sign * (1.0 if sense == LE else -1.0)
            if a_mat[i, slack] > 0:
                basis.append(slack)
                slack += 1
                continue
            slack += 1
        a_mat[i, art] = 1.0
        basis.append(art)
        art += 1

    tab = _Tableau(a_mat, b, basis)
    first_art = n + n_slack
    if n_art:
        phase1 = np.zeros(width)
        phase1[first_art:] = 1.0
        tab.set_cost(phase1)
        status = tab.run(width, max_pivots, bland_after)
        if status == ITERATION_LIMIT:
            return LpSolution(ITERATION_LIMIT, iterations=tab.pivots)
        if -tab.t[m, -1] > FEAS_TOL:
            return LpSolution(INFEASIBLE, iterations=tab.pivots)
        _drive_out_artificials(tab, first_art)

    keep = tab.t[:, list(range(first_art)) + [width]]
    tab2 = _Tableau(keep[: len(tab.basis), :-1], keep[: len(tab.basis), -1], tab.basis)
    tab2.pivots = tab.pivots
    tab2.set_cost(np.concatenate([c, np.zeros(n_slack)]))
    status = tab2.run(first_art, max_pivots, bland_after)
    if status != OPTIMAL:
        return LpSolution(status, iterations=tab2.pivots)

    y = np.zeros(first_art)
    for i, j in enumerate(tab2.basis):
        y[j] = tab2.t[i, -1]
    x = lb + np.maximum(y[:n], 0.0)
    x = np.minimum(x, ub)
    return LpSolution(OPTIMAL, x, lp.objective_value(x), tab2.pivots)


def _drive_out_artificials(tab: _Tableau, first_art: int) -> None:
    """Pivot zero-level artificials out of the basis; drop redundant rows."""
    i = 0
    while i < len(tab.basis):
        if tab.basis[i] < first_art:
            i += 1
            continue
        row = tab.t[i, :first_art]
        e = int(np.argmax(np.abs(row))) if row.size else 0
        if row.size and abs(row[e]) > PIVOT_TOL:
            tab.pivot(i, e)
            i += 1
        else:
            tab.t = np.delete(tab.t, i, axis=0)
            del tab.basis[i]
