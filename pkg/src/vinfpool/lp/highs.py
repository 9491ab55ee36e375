"""HiGHS backend through scipy.optimize."""

from __future__ import annotations

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

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

_STATUS = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}


def _split(lp: LinearProgram):
    le = [i for i, c in enumerate(lp.constraints) if c.sense != EQ]
    eq = [i for i, c in enumerate(lp.constraints) if c.sense == EQ]
    a_ub = lp.matrix(le)
    flip = np.array([-1.0 if lp.constraints[i].sense == GE else 1.0 for i in le])
    b_ub = np.array([lp.constraints[i].rhs for i in le]) * flip if le else np.zeros(0)
    if le:
        a_ub = a_ub.multiply(flip[:, None]).tocsr()
    a_eq = lp.matrix(eq)
    b_eq = np.array([lp.constraints[i].rhs for i in eq])
    return a_ub, b_ub, a_eq, b_eq


def solve_highs(lp: LinearProgram, relax_integrality: bool = True,
                max_iterations: int | None = None) -> LpSolution:
    c = lp.cost_vector()
    lb, ub = lp.bounds()
    if lp.num_vars == 0:
        ok = all((con.sense == LE and con.rhs >= 0) or (con.sense == GE and con.rhs <= 0)
                 or (con.sense == EQ and con.rhs == 0) for con in lp.constraints)
        return LpSolution(OPTIMAL if ok else INFEASIBLE, np.zeros(0), 0.0 if ok else np.nan)
    integral = np.array([v.integer for v in lp.variables], dtype=int)
    if not relax_integrality and integral.any():
        cons = []
        if lp.num_rows:
            lo = np.array([-np.inf if con.sense == LE else con.rhs for con in lp.constraints])
            hi = np.array([np.inf if con.sense == GE else con.rhs for con in lp.constraints])
            cons.append(LinearConstraint(lp.matrix(), lo, hi))
        res = milp(c, constraints=cons, integrality=integral, bounds=Bounds(lb, ub))
    else:
        a_ub, b_ub, a_eq, b_eq = _split(lp)
        options = {"presolve": True}
        if max_iterations is not None:
            options["maxiter"] = max_iterations
        res = linprog(
            c,
            A_ub=a_ub if a_ub.shape[0] else None,
            b_ub=b_ub if a_ub.shape[0] else None,
            A_eq=a_eq if a_eq.shape[0] else None,
            b_eq=b_eq if a_eq.shape[0] else None,
            bounds=np.column_stack([lb, ub]),
            method="highs",
            options=options,
        )
    status = _STATUS.get(res.status, INFEASIBLE)
    if status != OPTIMAL or res.x is None:
        return LpSolution(status)
    x = np.clip(np.asarray(res.x, dtype=float), lb, ub)
    return LpSolution(OPTIMAL, x, lp.objective_value(x), int(getattr(res, "nit", 0) or 0))
