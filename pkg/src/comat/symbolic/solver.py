"""Exact linear solving and consistency auditing over the mini-language.

All arithmetic is over fractions.Fraction; nothing here ever rounds. The
elimination keeps a provenance set per row so infeasibility reports can name
the constraints that actually clash.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .grammar import (
    Constraint,
    LinearExpr,
    Rel,
    Sort,
    SymbolicError,
    SymbolicProblem,
)


class SolveError(SymbolicError):
    pass


class UnderdeterminedError(SolveError):
    def __init__(self, free_variables: Sequence[str]):
        self.free_variables = tuple(free_variables)
        super().__init__(
            "system is underdetermined; free variables: " + ", ".join(self.free_variables)
        )


class InfeasibleError(SolveError):
    def __init__(self, violated: Sequence[str], detail: str = ""):
        self.violated = tuple(violated)
        msg = "constraints cannot all hold: " + "; ".join(self.violated)
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class SortError(SolveError):
    def __init__(self, variable: str, value: Fraction):
        self.variable = variable
        self.value = value
        super().__init__(
            f"variable {variable!r} is declared int but solves to {value}"
        )


@dataclass(frozen=True)
class Solution:
    assignment: dict[str, Fraction]
    derivation: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class ConsistencyVerdict:
    consistent: bool
    violated: tuple[str, ...]
    assignment: dict[str, Fraction]
    undetermined: tuple[str, ...]


def _collect(expr: LinearExpr, consts: Mapping[str, Fraction]
             ) -> tuple[dict[str, Fraction], Fraction]:
    """Flatten an expression into variable coefficients plus a constant."""
    coeffs: dict[str, Fraction] = {}
    constant = Fraction(0)
    for term in expr.terms:
        value = Fraction(term.sign) * term.numeric
        for name in term.consts:
            value *= consts[name]
        if term.variable is None:
            constant += value
        else:
            coeffs[term.variable] = coeffs.get(term.variable, Fraction(0)) + value
    return coeffs, constant


def _constraint_parts(con: Constraint, consts: Mapping[str, Fraction]
                      ) -> tuple[dict[str, Fraction], Fraction]:
    """Normal form lhs - rhs: (coefficients, constant)."""
    lc, lk = _collect(con.lhs, consts)
    rc, rk = _collect(con.rhs, consts)
    coeffs = dict(lc)
    for name, value in rc.items():
        coeffs[name] = coeffs.get(name, Fraction(0)) - value
    coeffs = {n: v for n, v in coeffs.items() if v != 0}
    return coeffs, lk - rk


_REL_CHECKS = {
    Rel.EQ: lambda d: d == 0,
    Rel.LE: lambda d: d <= 0,
    Rel.GE: lambda d: d >= 0,
    Rel.LT: lambda d: d < 0,
    Rel.GT: lambda d: d > 0,
}


def _row_text(names: Sequence[str], row: Sequence[Fraction], rhs: Fraction) -> str:
    parts = []
    for name, coeff in zip(names, row):
        if coeff == 0:
            continue
        parts.append(f"{coeff}*{name}")
    lhs = " + ".join(parts) if parts else "0"
    return f"{lhs} = {rhs}"


def solve(problem: SymbolicProblem) -> Solution:
    """Solve the equality system exactly and verify every other constraint.

    Raises UnderdeterminedError when equalities leave free variables,
    InfeasibleError when constraints clash (naming the offenders), and
    SortError when an int-sorted variable solves to a non-integer.
    """
    names = list(problem.variable_names())
    consts = problem.constant_map()
    derivation: list[tuple[str, str]] = []

    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []
    provenance: list[set[int]] = []
    inequalities: list[tuple[int, Constraint, dict[str, Fraction], Fraction]] = []
    for idx, con in enumerate(problem.constraints):
        coeffs, constant = _constraint_parts(con, consts)
        if con.rel is Rel.EQ:
            rows.append([coeffs.get(n, Fraction(0)) for n in names])
            rhs.append(-constant)
            provenance.append({idx})
        else:
            inequalities.append((idx, con, coeffs, constant))

    n_vars = len(names)
    pivot_of_col: dict[int, int] = {}
    pivot_row = 0
    for col in range(n_vars):
        # exact partial pivoting: largest |coefficient|, lowest row on ties
        best = None
        for r in range(pivot_row, len(rows)):
            mag = abs(rows[r][col])
            if mag != 0 and (best is None or mag > abs(rows[best][col])):
                best = r
        if best is None:
            continue
        if best != pivot_row:
            rows[best], rows[pivot_row] = rows[pivot_row], rows[best]
            rhs[best], rhs[pivot_row] = rhs[pivot_row], rhs[best]
            provenance[best], provenance[pivot_row] = provenance[pivot_row], provenance[best]
            derivation.append(("swap", f"rows {pivot_row + 1} and {best + 1}"))
        pivot = rows[pivot_row][col]
        for r in range(len(rows)):
            if r == pivot_row or rows[r][col] == 0:
                continue
            factor = rows[r][col] / pivot
            rows[r] = [a - factor * b for a, b in zip(rows[r], rows[pivot_row])]
            rhs[r] = rhs[r] - factor * rhs[pivot_row]
            provenance[r] = provenance[r] | provenance[pivot_row]
            derivation.append(
                ("eliminate",
                 f"row {r + 1} := row {r + 1} - ({factor})*row {pivot_row + 1}")
            )
        pivot_of_col[col] = pivot_row
        derivation.append(
            ("reduce", _row_text(names, rows[pivot_row], rhs[pivot_row]))
        )
        pivot_row += 1

    # rows beyond the last pivot must be 0 = 0, else the system is infeasible
    for r in range(pivot_row, len(rows)):
        if rhs[r] != 0:
            offenders = sorted(provenance[r])
            raise InfeasibleError(
                [problem.constraints[i].render() for i in offenders],
                detail=f"reduces to 0 = {rhs[r]}",
            )

    free = [names[c] for c in range(n_vars) if c not in pivot_of_col]
    if free:
        raise UnderdeterminedError(free)

    assignment: dict[str, Fraction] = {}
    for col in range(n_vars):
        r = pivot_of_col[col]
        assignment[names[col]] = rhs[r] / rows[r][col]
    for name in names:
        derivation.append(("solve", f"{name} = {assignment[name]}"))

    for var in problem.variables:
        if var.sort is Sort.INT and assignment[var.name].denominator != 1:
            raise SortError(var.name, assignment[var.name])

    violated = []
    for idx, con, coeffs, constant in inequalities:
        delta = constant + sum(
            (coeffs[n] * assignment[n] for n in coeffs), Fraction(0)
        )
        if not _REL_CHECKS[con.rel](delta):
            violated.append(con.render())
    if violated:
        raise InfeasibleError(violated, detail="solution of the equalities violates them")

    derivation.append(("answer", f"{problem.target} = {assignment[problem.target]}"))
    return Solution(assignment=assignment, derivation=tuple(derivation))


def check_consistency(problem: SymbolicProblem,
                      claimed: Mapping[str, Fraction | int | str]) -> ConsistencyVerdict:
    """Audit claimed variable values against the problem's constraints.

    Free variables are filled in by unit propagation over the equalities
    (each equality with exactly one unknown determines it, to fixpoint);
    every fully grounded constraint is then evaluated exactly. Constraints
    that still mention unknown variables cannot be falsified and are skipped.
    """
    names = set(problem.variable_names())
    consts = problem.constant_map()
    values: dict[str, Fraction] = {}
    for name, raw in claimed.items():
        if name not in names:
            raise SolveError(f"claimed name {name!r} is not a declared variable")
        values[name] = Fraction(raw)

    parts = [_constraint_parts(con, consts) for con in problem.constraints]

    changed = True
    while changed:
        changed = False
        for con, (coeffs, constant) in zip(problem.constraints, parts):
            if con.rel is not Rel.EQ:
                continue
            unknown = [n for n in coeffs if n not in values]
            if len(unknown) != 1:
                continue
            pivot_name = unknown[0]
            acc = constant
            for n, coeff in coeffs.items():
                if n != pivot_name:
                    acc += coeff * values[n]
            coeff = coeffs[pivot_name]
            values[pivot_name] = -acc / coeff
            changed = True

    violated: list[str] = []
    for con, (coeffs, constant) in zip(problem.constraints, parts):
        if any(n not in values for n in coeffs):
            continue
        delta = constant + sum(
            (coeffs[n] * values[n] for n in coeffs), Fraction(0)
        )
        if not _REL_CHECKS[con.rel](delta):
            violated.append(con.render())

    undetermined = tuple(sorted(n for n in names if n not in values))
    return ConsistencyVerdict(
        consistent=not violated,
        violated=tuple(violated),
        assignment=values,
        undetermined=undetermined,
    )
