"""Heuristic bridge from free-text reasoning traces to the mini-language.

Model traces state their symbolic form in loose bullet notation ("Let v be
...", "$v + r = T$", "T = 50,000"). This module pattern-matches that notation
into a parseable program. It is deliberately tolerant: anything it cannot
shape downgrades the trace to "unparsed" (or "unverifiable" when the content
is genuinely nonlinear) instead of raising.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..normalize import strip_separators
from .grammar import NonlinearityError, SymbolicError, SymbolicProblem, parse_symbolic

PARSED = "parsed"
UNPARSED = "unparsed"
UNVERIFIABLE = "unverifiable"


@dataclass(frozen=True)
class ExtractionResult:
    status: str  # parsed | unparsed | unverifiable
    program: str | None = None
    problem: SymbolicProblem | None = None
    reason: str | None = None


_MATH_SPAN = re.compile(r"\$\$(.+?)\$\$|\$(.+?)\$|\\\((.+?)\\\)|\\\[(.+?)\\\]", re.DOTALL)
_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")
_FIND = re.compile(r"\bfind\b[\s:$\\({]*([A-Za-z_][A-Za-z0-9_]*)", re.IGNORECASE)
_RELATION = re.compile(r"^([^=<>]+?)\s*(<=|>=|=|<|>)\s*([^=<>]+)$")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_ONLY = re.compile(r"[-+]?\d+(?:\.\d+)?(?:/\d+)?")
_ALLOWED = re.compile(r"^[A-Za-z0-9_+\-*/=<>.\s]+$")
# Text up to (not including) the solve section; derivations past it are noise.
_SOLVE_CUT = re.compile(r"^[^A-Za-z]*\**\s*solve step by step", re.IGNORECASE | re.MULTILINE)

_REWRITES = (
    (re.compile(r"\\text\{([^{}]*)\}"), r" \1 "),
    (re.compile(r"\\(?:cdot|times)\b"), "*"),
    (re.compile(r"[·×]"), "*"),
    (re.compile(r"\\(?:geq|ge)\b"), ">="),
    (re.compile(r"\\(?:leq|le)\b"), "<="),
    (re.compile(r"[≥]"), ">="),
    (re.compile(r"[≤]"), "<="),
    (re.compile(r"\\[,;!:]"), " "),
    (re.compile(r"\\\$"), ""),
)


def _normalize_statement(raw: str) -> str | None:
    s = raw
    for pattern, repl in _REWRITES:
        s = pattern.sub(repl, s)
    s = strip_separators(s)
    s = s.replace("$", " ")
    s = re.sub(r"(\d)\s*([A-Za-z_])", r"\1*\2", s)  # implicit products: 250v
    s = re.sub(r"\s+", " ", s).strip().rstrip(".,;")
    if not s or _ALLOWED.match(s) is None:
        return None
    return s


def _candidate_statements(text: str) -> list[str]:
    cut = _SOLVE_CUT.search(text)
    region = text[: cut.start()] if cut else text
    out: list[str] = []
    for line in region.splitlines():
        line = _BULLET.sub("", line.strip())
        if not line:
            continue
        spans = [next(g for g in m.groups() if g is not None)
                 for m in _MATH_SPAN.finditer(line)]
        for chunk in spans or [line]:
            s = _normalize_statement(chunk)
            if s is None:
                continue
            if s.count("=") + s.count("<") + s.count(">") != 1:
                continue  # chains and prose are derivation noise
            m = _RELATION.match(s)
            if m is None:
                continue
            out.append(s)
    return out


def _find_target(text: str) -> str | None:
    target = None
    for m in _FIND.finditer(text):
        target = m.group(1)
    return target


def extract_symbolic(trace_text: str) -> ExtractionResult:
    """Map a reasoning trace onto a mini-language program, best effort."""
    statements = _candidate_statements(trace_text)
    if not statements:
        return ExtractionResult(UNPARSED, reason="no relations found")
    target = _find_target(trace_text)
    if target is None:
        return ExtractionResult(UNPARSED, reason="no find target")

    facts: dict[str, str] = {}
    rules: list[str] = []
    for s in statements:
        m = _RELATION.match(s)
        assert m is not None
        lhs, rel, rhs = m.group(1).strip(), m.group(2), m.group(3).strip()
        if (
            rel == "="
            and _NAME.fullmatch(lhs)
            and _NUMBER_ONLY.fullmatch(rhs)
            and lhs != target
        ):
            facts.setdefault(lhs, rhs)
        else:
            rules.append(s)
    # A fact name that also appears bare on rule left sides stays a constant;
    # rules referencing only facts are dropped later by the parser if inconsistent.
    if not rules:
        return ExtractionResult(UNPARSED, reason="only literal assignments found")

    ordered_names: list[str] = []
    for s in [target] + rules:
        for name in _NAME.findall(s):
            if name not in ordered_names:
                ordered_names.append(name)
    variables = [n for n in ordered_names if n not in facts]
    if target not in variables:
        variables.insert(0, target)

    lines = [f"var {v}: rat;" for v in variables]
    lines += [f"const {name} = {value};" for name, value in facts.items()]
    lines += [f"{rule};" for rule in rules]
    lines.append(f"find {target}")
    program = "\n".join(lines) + "\n"

    try:
        problem = parse_symbolic(program)
    except NonlinearityError as exc:
        return ExtractionResult(UNVERIFIABLE, program=program, reason=str(exc))
    except SymbolicError as exc:
        return ExtractionResult(UNPARSED, program=program, reason=str(exc))
    return ExtractionResult(PARSED, program=program, problem=problem)
