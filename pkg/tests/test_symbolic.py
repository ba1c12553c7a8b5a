from __future__ import annotations

import random
from fractions import Fraction
from pathlib import Path

import pytest

from comat.symbolic import (
    PARSED,
    UNPARSED,
    UNVERIFIABLE,
    DuplicateNameError,
    InfeasibleError,
    LexError,
    NonlinearityError,
    ParseError,
    Sort,
    SortError,
    SolveError,
    UndeclaredNameError,
    UnderdeterminedError,
    check_consistency,
    extract_symbolic,
    parse_symbolic,
    pretty_print,
    solve,
)

TICKETS = Path(__file__).resolve().parent.parent / "fixtures" / "symbolic" / "tickets.sym"


# -- grammar ------------------------------------------------------------------

def test_parse_ticket_program_shape():
    problem = parse_symbolic(TICKETS.read_text())
    assert problem.variable_names() == ("v", "r")
    assert all(v.sort is Sort.INT for v in problem.variables)
    assert problem.constant_map() == {
        "T": Fraction(50000),
        "Pv": Fraction(250),
        "Pr": Fraction(100),
        "R": Fraction(6500000),
    }
    assert len(problem.constraints) == 4
    assert problem.target == "v"


def test_pretty_print_is_a_fixpoint():
    problem = parse_symbolic(TICKETS.read_text())
    once = pretty_print(problem)
    twice = pretty_print(parse_symbolic(once))
    assert once == twice
    # reparsing the rendering preserves the solution
    assert solve(parse_symbolic(once)).assignment == solve(problem).assignment


def test_fractional_coefficients_and_division():
    problem = parse_symbolic("var x: rat;\n3/2*x = 6;\nfind x")
    assert solve(problem).assignment["x"] == Fraction(4)
    problem = parse_symbolic("var x: rat;\nx/4 = 5;\nfind x")
    assert solve(problem).assignment["x"] == Fraction(20)


def test_unicode_relations_are_aliased():
    problem = parse_symbolic("var x: rat;\nx = 3;\nx ≥ 1;\nx ≤ 5;\nfind x")
    assert solve(problem).assignment["x"] == Fraction(3)


def test_duplicate_declaration_rejected():
    with pytest.raises(DuplicateNameError):
        parse_symbolic("var x: rat;\nconst x = 2;\nx = 1;\nfind x")


def test_undeclared_name_rejected():
    with pytest.raises(UndeclaredNameError):
        parse_symbolic("var x: rat;\nx + y = 2;\nfind x")


def test_find_target_must_be_declared_variable():
    with pytest.raises(UndeclaredNameError):
        parse_symbolic("var x: rat;\nx = 1;\nfind z")
    with pytest.raises(ParseError):
        parse_symbolic("var x: rat;\nconst c = 2;\nx = c;\nfind c")


def test_missing_find_clause():
    with pytest.raises(ParseError, match="find"):
        parse_symbolic("var x: rat;\nx = 1;\n")


def test_product_of_two_variables_rejected():
    with pytest.raises(NonlinearityError):
        parse_symbolic("var x: rat;\nvar y: rat;\nx*y = 6;\nfind x")


def test_division_by_variable_rejected():
    with pytest.raises(NonlinearityError):
        parse_symbolic("var x: rat;\nvar y: rat;\nx/y = 6;\nfind x")


def test_unexpected_character_is_a_lex_error():
    with pytest.raises(LexError):
        parse_symbolic("var x@: rat;\nx = 1;\nfind x")


def test_comments_and_blank_lines_ignored():
    text = "# header\nvar x: rat;  # inline\n\nx = 7;\nfind x\n"
    assert solve(parse_symbolic(text)).assignment["x"] == Fraction(7)


# -- solver -------------------------------------------------------------------

def test_ticket_system_solves_exactly():
    solution = solve(parse_symbolic(TICKETS.read_text()))
    assert solution.assignment == {"v": Fraction(10000), "r": Fraction(40000)}
    kinds = [kind for kind, _ in solution.derivation]
    assert kinds[-1] == "answer"
    assert solution.derivation[-1][1] == "v = 10000"
    assert "reduce" in kinds and "solve" in kinds


def test_conflicting_equalities_name_both_offenders():
    with pytest.raises(InfeasibleError) as exc:
        solve(parse_symbolic("var x: rat;\nx = 1;\nx = 2;\nfind x"))
    violated = " ".join(exc.value.violated)
    assert "x = 1" in violated and "x = 2" in violated


def test_underdetermined_system_names_free_variables():
    with pytest.raises(UnderdeterminedError) as exc:
        solve(parse_symbolic("var a: rat;\nvar b: rat;\na + b = 3;\nfind a"))
    assert tuple(exc.value.free_variables) == ("b",)


def test_int_sorted_variable_must_solve_integral():
    with pytest.raises(SortError) as exc:
        solve(parse_symbolic("var n: int;\n2*n = 3;\nfind n"))
    assert exc.value.variable == "n"
    assert exc.value.value == Fraction(3, 2)


def test_inequality_violation_reported_after_solving():
    with pytest.raises(InfeasibleError) as exc:
        solve(parse_symbolic("var x: rat;\nx = 5;\nx <= 4;\nfind x"))
    assert exc.value.violated == ("x <= 4",) or list(exc.value.violated) == ["x <= 4"]


def test_strict_inequalities_enforced():
    assert solve(parse_symbolic("var x: rat;\nx = 5;\nx > 4;\nfind x")).assignment["x"] == 5
    with pytest.raises(InfeasibleError):
        solve(parse_symbolic("var x: rat;\nx = 4;\nx > 4;\nfind x"))


# -- consistency audit ----------------------------------------------------------

def test_consistency_accepts_correct_claim_and_propagates():
    problem = parse_symbolic(TICKETS.read_text())
    verdict = check_consistency(problem, {"v": 10000})
    assert verdict.consistent
    assert verdict.violated == ()
    assert verdict.assignment["r"] == Fraction(40000)
    assert verdict.undetermined == ()


def test_consistency_rejects_wrong_claim():
    problem = parse_symbolic(TICKETS.read_text())
    verdict = check_consistency(problem, {"v": 20000})
    assert not verdict.consistent
    assert any("Pv" in v and "Pr" in v for v in verdict.violated)


def test_consistency_with_no_claims_is_vacuous():
    problem = parse_symbolic(TICKETS.read_text())
    verdict = check_consistency(problem, {})
    assert verdict.consistent
    assert verdict.undetermined == ("r", "v")


def test_consistency_rejects_unknown_claimed_name():
    problem = parse_symbolic(TICKETS.read_text())
    with pytest.raises(SolveError):
        check_consistency(problem, {"zz": 1})


# -- randomized oracle ----------------------------------------------------------

def _fraction_text(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def _equation(coeffs: list[Fraction], names: list[str], rhs: Fraction) -> str:
    parts: list[str] = []
    for coeff, name in zip(coeffs, names):
        if coeff == 0:
            continue
        piece = f"{_fraction_text(abs(coeff))}*{name}"
        if not parts:
            parts.append(piece if coeff > 0 else f"-{piece}")
        else:
            parts.append(("+ " if coeff > 0 else "- ") + piece)
    return f"{' '.join(parts)} = {_fraction_text(rhs)};"


def _determinant(matrix: list[list[Fraction]]) -> Fraction:
    size = len(matrix)
    work = [row[:] for row in matrix]
    det = Fraction(1)
    for col in range(size):
        pivot = next((r for r in range(col, size) if work[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            work[col], work[pivot] = work[pivot], work[col]
            det = -det
        det *= work[col][col]
        for r in range(col + 1, size):
            factor = work[r][col] / work[col][col]
            work[r] = [a - factor * b for a, b in zip(work[r], work[col])]
    return det


def _random_system(rng: random.Random) -> tuple[str, dict[str, Fraction], list[list[Fraction]], list[Fraction], list[str]]:
    size = rng.randint(2, 4)
    names = [f"x{i + 1}" for i in range(size)]
    while True:
        matrix = [[Fraction(rng.randint(-6, 6)) for _ in range(size)] for _ in range(size)]
        if _determinant(matrix) != 0 and all(any(c != 0 for c in row) for row in matrix):
            break
    target = {name: Fraction(rng.randint(-9, 9)) for name in names}
    rhs = [sum((row[j] * target[names[j]] for j in range(size)), Fraction(0)) for row in matrix]
    lines = [f"var {name}: rat;" for name in names]
    lines += [_equation(matrix[i], names, rhs[i]) for i in range(size)]
    lines.append(f"find {names[0]}")
    return "\n".join(lines), target, matrix, rhs, names


def test_random_constructed_systems_recovered_exactly():
    rng = random.Random(7)
    for _ in range(100):
        program, expected, matrix, rhs, names = _random_system(rng)
        assert solve(parse_symbolic(program)).assignment == expected


def test_row_scaling_leaves_solution_bit_identical():
    rng = random.Random(11)
    for _ in range(60):
        program, expected, matrix, rhs, names = _random_system(rng)
        base = solve(parse_symbolic(program)).assignment
        scaled_lines = [f"var {name}: rat;" for name in names]
        for i, row in enumerate(matrix):
            scale = Fraction(0)
            while scale == 0:
                scale = Fraction(rng.randint(-9, 9), rng.randint(1, 9))
            scaled_lines.append(_equation([c * scale for c in row], names, rhs[i] * scale))
        scaled_lines.append(f"find {names[0]}")
        scaled = solve(parse_symbolic("\n".join(scaled_lines))).assignment
        assert scaled == base == expected


# -- trace extraction -----------------------------------------------------------

COMAT_STYLE_TRACE = """\
**Write all the facts:**
- $T = 50$
- $C = 70$

**Parse problem into logical rules:**
- $v + r = T$
- $3v + r = C$

**Parse the question:**
Find $v$.

**Solve step by step:**
Subtract the first rule from the second: $2v = 20$, so $v = 10$.

Final Answer: 10
"""


def test_extraction_builds_solvable_program_from_trace():
    result = extract_symbolic(COMAT_STYLE_TRACE)
    assert result.status == PARSED
    assert result.problem is not None
    assert "const T = 50" in result.program
    assert "const C = 70" in result.program
    assert "3*v + r = C" in result.program
    # derivation lines after the solve heading stay out of the program
    assert "2*v" not in result.program
    assert "v = 10" not in result.program
    assert solve(result.problem).assignment["v"] == Fraction(10)


def test_extraction_prose_only_is_unparsed():
    result = extract_symbolic("The answer is clearly forty two, no algebra needed.")
    assert result.status == UNPARSED
    assert result.reason == "no relations found"


def test_extraction_without_find_target_is_unparsed():
    result = extract_symbolic("$x + y = 9$ and also $x - y = 1$.")
    assert result.status == UNPARSED
    assert result.reason == "no find target"


def test_extraction_literal_assignments_only_is_unparsed():
    result = extract_symbolic("$a = 5$\n$b = 7$\nFind $c$.")
    assert result.status == UNPARSED
    assert "literal" in result.reason


def test_extraction_nonlinear_trace_is_unverifiable():
    result = extract_symbolic("$x * y = 6$\n$x - y = 1$\nFind $x$.")
    assert result.status == UNVERIFIABLE
    assert result.program is not None


def test_extraction_ignores_relation_chains():
    trace = "$a = b = 3$\n$p + q = 12$\n$p - q = 2$\nFind $p$."
    result = extract_symbolic(trace)
    assert result.status == PARSED
    assert "a" not in result.problem.variable_names()
    assert solve(result.problem).assignment["p"] == Fraction(7)


def test_extraction_last_find_wins():
    trace = "$m + n = 10$\n$m - n = 4$\nFirst find $n$. Actually, find $m$."
    result = extract_symbolic(trace)
    assert result.status == PARSED
    assert result.problem.target == "m"
    assert solve(result.problem).assignment["m"] == Fraction(7)
