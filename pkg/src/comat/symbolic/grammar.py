"""Constraint mini-language: lexer, parser, AST, pretty printer.

The language covers exactly what linear word problems need:

    program    := decl* constraint* find
    decl       := "var" NAME ":" ("int" | "rat") ";"
                | "const" NAME "=" RATIONAL ";"
    constraint := linexpr REL linexpr ";"       REL in {=, <=, >=, <, >}
    linexpr    := term (("+" | "-") term)*
    term       := factor ("*" factor)*          at most one variable factor
    factor     := RATIONAL | NAME
    find       := "find" NAME

"#" starts a comment to end of line; input is UTF-8. Products with two or
more variable factors are rejected at parse time, so everything downstream
may assume linearity. Constant names are legal coefficient factors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from ..errors import ComatError

_KEYWORDS = {"var", "const", "int", "rat", "find"}


class SymbolicError(ComatError):
    """Any mini-language failure; carries a source position when known."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{message} (line {line}, col {col})"
        super().__init__(message)


class LexError(SymbolicError):
    pass


class ParseError(SymbolicError):
    pass


class DuplicateNameError(SymbolicError):
    pass


class UndeclaredNameError(SymbolicError):
    pass


class NonlinearityError(SymbolicError):
    def __init__(self, term_text: str, line: int | None = None, col: int | None = None):
        self.term_text = term_text
        super().__init__(f"nonlinear term {term_text!r}", line, col)


class Sort(str, Enum):
    INT = "int"
    RAT = "rat"


class Rel(str, Enum):
    EQ = "="
    LE = "<="
    GE = ">="
    LT = "<"
    GT = ">"


@dataclass(frozen=True)
class Variable:
    name: str
    sort: Sort


@dataclass(frozen=True)
class Constant:
    name: str
    value: Fraction


@dataclass(frozen=True)
class Term:
    """One product in a linear expression, normalised at parse time.

    numeric is the folded product of numeric literal factors (1 when none was
    written); consts holds constant-name factors in written order; variable is
    the single variable factor, or None for a pure value term.
    """

    sign: int
    numeric: Fraction
    consts: tuple[str, ...] = ()
    variable: str | None = None

    def render(self) -> str:
        parts: list[str] = []
        if self.numeric != 1 or (not self.consts and self.variable is None):
            parts.append(_render_number(self.numeric))
        parts.extend(self.consts)
        if self.variable is not None:
            parts.append(self.variable)
        return "*".join(parts)


@dataclass(frozen=True)
class LinearExpr:
    terms: tuple[Term, ...]

    def render(self) -> str:
        if not self.terms:
            return "0"
        chunks: list[str] = []
        for i, term in enumerate(self.terms):
            body = term.render()
            if i == 0:
                chunks.append(f"-{body}" if term.sign < 0 else body)
            else:
                chunks.append(f"- {body}" if term.sign < 0 else f"+ {body}")
        return " ".join(chunks)


@dataclass(frozen=True)
class Constraint:
    lhs: LinearExpr
    rel: Rel
    rhs: LinearExpr

    def render(self) -> str:
        return f"{self.lhs.render()} {self.rel.value} {self.rhs.render()}"


@dataclass(frozen=True)
class SymbolicProblem:
    variables: tuple[Variable, ...]
    constants: tuple[Constant, ...]
    constraints: tuple[Constraint, ...]
    target: str

    def variable_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def constant_map(self) -> dict[str, Fraction]:
        return {c.name: c.value for c in self.constants}


def _render_number(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


# ---------------------------------------------------------------------------
# lexer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str  # NAME NUMBER SYMBOL EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
      (?P<ws>[ \t\r]+)
    | (?P<comment>\#[^\n]*)
    | (?P<newline>\n)
    | (?P<number>\d+(?:\.\d+)?)
    | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<symbol><=|>=|≤|≥|[=<>+\-*/:;])
    """,
    re.VERBOSE,
)

_SYMBOL_ALIASES = {"≤": "<=", "≥": ">="}


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise LexError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        pos = m.end()
        if m.lastgroup == "newline":
            line += 1
            line_start = pos
            continue
        if m.lastgroup in ("ws", "comment"):
            continue
        col = m.start() - line_start + 1
        if m.lastgroup == "number":
            tokens.append(_Token("NUMBER", m.group(), line, col))
        elif m.lastgroup == "name":
            tokens.append(_Token("NAME", m.group(), line, col))
        else:
            sym = _SYMBOL_ALIASES.get(m.group(), m.group())
            tokens.append(_Token("SYMBOL", sym, line, col))
    tokens.append(_Token("EOF", "", line, len(text) - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.variables: list[Variable] = []
        self.constants: list[Constant] = []
        self.names: dict[str, str] = {}  # name -> "var" | "const"

    # -- token helpers ------------------------------------------------------

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            raise ParseError(f"expected {want!r}, found {tok.text or 'end of input'!r}",
                             tok.line, tok.col)
        return self.advance()

    def at_symbol(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind == "SYMBOL" and tok.text == text

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "NAME" and tok.text == word

    # -- grammar ------------------------------------------------------------

    def parse_program(self) -> SymbolicProblem:
        while self.at_keyword("var") or self.at_keyword("const"):
            self.parse_decl()
        constraints: list[Constraint] = []
        while not self.at_keyword("find"):
            tok = self.peek()
            if tok.kind == "EOF":
                raise ParseError("missing 'find' clause", tok.line, tok.col)
            if tok.kind == "NAME" and tok.text in ("var", "const"):
                raise ParseError("declarations must precede constraints", tok.line, tok.col)
            constraints.append(self.parse_constraint())
        self.expect("NAME", "find")
        target_tok = self.expect("NAME")
        if self.at_symbol(";"):
            self.advance()
        tok = self.peek()
        if tok.kind != "EOF":
            raise ParseError(f"unexpected trailing input {tok.text!r}", tok.line, tok.col)
        if target_tok.text not in self.names:
            raise UndeclaredNameError(
                f"find target {target_tok.text!r} is not declared",
                target_tok.line, target_tok.col,
            )
        if self.names[target_tok.text] != "var":
            raise ParseError(
                f"find target {target_tok.text!r} must be a variable",
                target_tok.line, target_tok.col,
            )
        return SymbolicProblem(
            variables=tuple(self.variables),
            constants=tuple(self.constants),
            constraints=tuple(constraints),
            target=target_tok.text,
        )

    def parse_decl(self) -> None:
        kw = self.advance()
        name_tok = self.expect("NAME")
        if name_tok.text in _KEYWORDS:
            raise ParseError(f"{name_tok.text!r} is a reserved word",
                             name_tok.line, name_tok.col)
        if name_tok.text in self.names:
            raise DuplicateNameError(f"{name_tok.text!r} declared twice",
                                     name_tok.line, name_tok.col)
        if kw.text == "var":
            self.expect("SYMBOL", ":")
            sort_tok = self.expect("NAME")
            if sort_tok.text not in ("int", "rat"):
                raise ParseError(f"unknown sort {sort_tok.text!r}",
                                 sort_tok.line, sort_tok.col)
            self.variables.append(Variable(name_tok.text, Sort(sort_tok.text)))
            self.names[name_tok.text] = "var"
        else:
            self.expect("SYMBOL", "=")
            value = self.parse_signed_number()
            self.constants.append(Constant(name_tok.text, value))
            self.names[name_tok.text] = "const"
        self.expect("SYMBOL", ";")

    def parse_signed_number(self) -> Fraction:
        negative = False
        if self.at_symbol("-"):
            self.advance()
            negative = True
        tok = self.expect("NUMBER")
        value = Fraction(tok.text)
        if self.at_symbol("/"):
            self.advance()
            den_tok = self.expect("NUMBER")
            den = Fraction(den_tok.text)
            if den == 0:
                raise ParseError("division by zero", den_tok.line, den_tok.col)
            value = value / den
        return -value if negative else value

    def parse_constraint(self) -> Constraint:
        lhs = self.parse_linexpr()
        rel_tok = self.peek()
        if rel_tok.kind != "SYMBOL" or rel_tok.text not in ("=", "<=", ">=", "<", ">"):
            raise ParseError(f"expected relation, found {rel_tok.text!r}",
                             rel_tok.line, rel_tok.col)
        self.advance()
        rhs = self.parse_linexpr()
        self.expect("SYMBOL", ";")
        return Constraint(lhs, Rel(rel_tok.text), rhs)

    def parse_linexpr(self) -> LinearExpr:
        terms: list[Term] = []
        sign = 1
        if self.at_symbol("-"):
            self.advance()
            sign = -1
        elif self.at_symbol("+"):
            self.advance()
        terms.append(self.parse_term(sign))
        while self.at_symbol("+") or self.at_symbol("-"):
            sign = -1 if self.advance().text == "-" else 1
            terms.append(self.parse_term(sign))
        return LinearExpr(tuple(terms))

    def parse_term(self, sign: int) -> Term:
        first_tok = self.peek()
        seen: list[str] = [first_tok.text]
        numeric = Fraction(1)
        wrote_numeric = False
        consts: list[str] = []
        variable: str | None = None

        tok, value, is_var = self.parse_factor()
        if is_var:
            variable = str(value)
        elif isinstance(value, str):
            consts.append(value)
        else:
            numeric *= value
            wrote_numeric = True

        while self.at_symbol("*") or self.at_symbol("/"):
            op = self.advance()
            tok, value, is_var = self.parse_factor()
            seen.extend([op.text, tok.text])
            if op.text == "/":
                if is_var or isinstance(value, str):
                    raise NonlinearityError("".join(seen), op.line, op.col)
                if value == 0:
                    raise ParseError("division by zero", tok.line, tok.col)
                numeric /= value
                wrote_numeric = True
                continue
            if is_var:
                if variable is not None:
                    raise NonlinearityError("".join(seen), first_tok.line, first_tok.col)
                variable = str(value)
            elif isinstance(value, str):
                consts.append(value)
            else:
                numeric *= value
                wrote_numeric = True

        return Term(sign=sign, numeric=numeric, consts=tuple(consts), variable=variable)

    def parse_factor(self) -> tuple[_Token, Fraction | str, bool]:
        """Returns (token, value, is_variable); value is Fraction or a name."""
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.advance()
            return tok, Fraction(tok.text), False
        if tok.kind == "NAME":
            if tok.text in _KEYWORDS:
                raise ParseError(f"unexpected keyword {tok.text!r}", tok.line, tok.col)
            self.advance()
            role = self.names.get(tok.text)
            if role is None:
                raise UndeclaredNameError(f"undeclared name {tok.text!r}",
                                          tok.line, tok.col)
            if role == "var":
                return tok, tok.text, True
            return tok, tok.text, False  # constant reference kept symbolic
        raise ParseError(f"expected a number or name, found {tok.text or 'end of input'!r}",
                         tok.line, tok.col)


def parse_symbolic(text: str) -> SymbolicProblem:
    """Parse mini-language text into a validated SymbolicProblem."""
    return _Parser(text).parse_program()


def pretty_print(problem: SymbolicProblem) -> str:
    """Canonical textual form; parse(pretty_print(p)) is structurally equal to p."""
    lines: list[str] = []
    for v in problem.variables:
        lines.append(f"var {v.name}: {v.sort.value};")
    for c in problem.constants:
        lines.append(f"const {c.name} = {_render_number(c.value)};")
    for con in problem.constraints:
        lines.append(f"{con.render()};")
    lines.append(f"find {problem.target}")
    return "\n".join(lines) + "\n"
