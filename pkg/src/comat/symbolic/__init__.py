"""Exact symbolic layer: mini-language grammar, solver, and trace extraction."""

from .extract import (
    PARSED,
    UNPARSED,
    UNVERIFIABLE,
    ExtractionResult,
    extract_symbolic,
)
from .grammar import (
    Constant,
    Constraint,
    DuplicateNameError,
    LexError,
    LinearExpr,
    NonlinearityError,
    ParseError,
    Rel,
    Sort,
    SymbolicError,
    SymbolicProblem,
    Term,
    UndeclaredNameError,
    Variable,
    parse_symbolic,
    pretty_print,
)
from .solver import (
    ConsistencyVerdict,
    InfeasibleError,
    Solution,
    SolveError,
    SortError,
    UnderdeterminedError,
    check_consistency,
    solve,
)

__all__ = [
    "PARSED",
    "UNPARSED",
    "UNVERIFIABLE",
    "Constant",
    "ConsistencyVerdict",
    "Constraint",
    "DuplicateNameError",
    "ExtractionResult",
    "InfeasibleError",
    "LexError",
    "LinearExpr",
    "NonlinearityError",
    "ParseError",
    "Rel",
    "Solution",
    "SolveError",
    "Sort",
    "SortError",
    "SymbolicError",
    "SymbolicProblem",
    "Term",
    "UndeclaredNameError",
    "UnderdeterminedError",
    "Variable",
    "check_consistency",
    "extract_symbolic",
    "parse_symbolic",
    "pretty_print",
    "solve",
]
