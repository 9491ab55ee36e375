"""Fixed-format MPS writer."""

from __future__ import annotations

import math

from vinfpool.errors import NameLengthError
from vinfpool.lp.model import EQ, GE, LinearProgram

FIELD_WIDTH = 8
_ROW_TYPE = {"<=": "L", EQ: "E", GE: "G"}


def _namer(prefix: str, mangle: bool):
    def name(i: int, original: str) -> str:
        if len(original) <= FIELD_WIDTH and " " not in original and not mangle:
            return original
        if not mangle:
            raise NameLengthError(f"{original!r} does not fit an {FIELD_WIDTH}-character MPS field")
        return f"{prefix}{i}"
    return name


def _num(v: float) -> str:
    """Most precise rendering of ``v`` that fits a 12-character field."""
    for digits in range(12, 0, -1):
        text = f"{v:.{digits}g}"
        if len(text) <= 12:
            return text
    raise ValueError(f"{v!r} cannot be written in 12 characters")


def emit_mps(lp: LinearProgram, mangle: bool = True, name: str = "VINFLP") -> tuple[str, dict[str, str]]:
    """MPS text for ``lp`` plus the map from emitted names to original names.

    With ``mangle`` every column becomes ``C<i>`` and every row ``R<i>``
    so that arbitrarily long identifiers survive the 8-character fields.
    Without it, any name longer than 8 characters raises NameLengthError.
    """
    col_name = _namer("C", mangle)
    row_name = _namer("R", mangle)
    cols = [col_name(j, v.name) for j, v in enumerate(lp.variables)]
    rows = [row_name(i, c.name) for i, c in enumerate(lp.constraints)]
    for label in (*cols, *rows):
        if len(label) > FIELD_WIDTH:
            raise NameLengthError(f"{label!r} exceeds the MPS field width")
    mapping = {cols[j]: v.name for j, v in enumerate(lp.variables)}
    mapping.update({rows[i]: c.name for i, c in enumerate(lp.constraints)})

    by_col: list[list[tuple[str, float]]] = [[] for _ in lp.variables]
    for j, v in lp.objective.items():
        by_col[j].append(("COST", v))
    for i, con in enumerate(lp.constraints):
        for j, a in zip(con.cols, con.vals):
            by_col[j].append((rows[i], a))

    out = [f"NAME          {name}", "ROWS", " N  COST"]
    out += [f" {_ROW_TYPE[c.sense]}  {rows[i]}" for i, c in enumerate(lp.constraints)]
    out.append("COLUMNS")
    in_int = False
    marker = 0
    for j, var in enumerate(lp.variables):
        if var.integer != in_int:
            tag = "'INTORG'" if var.integer else "'INTEND'"
            out.append(f"    {'M' + str(marker):<8}  'MARKER'                 {tag}")
            marker += 1
            in_int = var.integer
        entries = by_col[j] or [("COST", 0.0)]
        for row, a in entries:
            out.append(f"    {cols[j]:<8}  {row:<8}  {_num(a):>12}")
    if in_int:
        out.append(f"    {'M' + str(marker):<8}  'MARKER'                 'INTEND'")
    out.append("RHS")
    for i, con in enumerate(lp.constraints):
        if con.rhs != 0.0:
            out.append(f"    {'RHS':<8}  {rows[i]:<8}  {_num(con.rhs):>12}")
    out.append("BOUNDS")
    for j, var in enumerate(lp.variables):
        if var.lb == var.ub:
            out.append(f" FX {'BND':<8}  {cols[j]:<8}  {_num(var.lb):>12}")
            continue
        if var.lb != 0.0:
            out.append(f" LO {'BND':<8}  {cols[j]:<8}  {_num(var.lb):>12}")
        if math.isfinite(var.ub):
            out.append(f" UP {'BND':<8}  {cols[j]:<8}  {_num(var.ub):>12}")
        elif var.integer:
            out.append(f" PL {'BND':<8}  {cols[j]:<8}")
    out.append("ENDATA")
    return "\n".join(out) + "\n", mapping
