"""Trace analytics: section segmentation, length profiles, robustness.

Completions that follow the structured output format are split on their
section headings; lengths are reported both as word counts and as counts
from a small frozen math-token lexer, so length comparisons across runs
stay internally consistent.
"""
from __future__ import annotations

import csv
import re
import statistics
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

from .errors import ComatError
from .normalize import round_half_up
from .prompting import SECTION_HEADERS

PREAMBLE = "preamble"
POSTAMBLE = "postamble"

SECTION_KEYS: tuple[str, ...] = (
    PREAMBLE,
    "definitions",
    "rules",
    "facts",
    "question",
    "solution",
    "answer",
    "matching",
    POSTAMBLE,
)

# Recognized spellings of each heading, lowercased.  The canonical forms
# come from the prompt templates; the rest absorb common drift.
_HEADER_ALIASES: dict[str, str] = {
    "define predicates and functions": "definitions",
    "definitions": "definitions",
    "parse problem into logical rules": "rules",
    "parse the problem into logical rules": "rules",
    "logical rules": "rules",
    "facts": "facts",
    "parse the question": "question",
    "solve step by step": "solution",
    "solve step-by-step": "solution",
    "derived answer": "answer",
    "match to provided options": "matching",
    "match to options": "matching",
}
for _key, _header in SECTION_HEADERS.items():
    _HEADER_ALIASES.setdefault(_header.lower(), _key)


class AnalysisError(ComatError):
    pass


class InsufficientDataError(AnalysisError):
    """Too few variant runs to compute spread statistics."""


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------

_HEADER_DECOR = re.compile(r"^(?:[-*>]|\d{1,2}[.)])\s+")
_FINAL_ANSWER = re.compile(r"(?i)^final\s+answer\b")


def _header_key(line: str) -> str | None:
    """Section key when a line is nothing but a known heading, else None."""
    body = _HEADER_DECOR.sub("", line.strip())
    body = body.strip("*_` \t")
    if not body.endswith(":"):
        return None
    return _HEADER_ALIASES.get(body[:-1].strip().strip("*_` \t").lower())


def _is_final_answer_line(line: str) -> bool:
    body = _HEADER_DECOR.sub("", line.strip()).strip("*_` \t")
    return bool(_FINAL_ANSWER.match(body))


@dataclass(frozen=True)
class Segment:
    key: str
    header_line: str  # empty for preamble/postamble
    lines: tuple[str, ...]

    @property
    def body(self) -> str:
        return "\n".join(self.lines)


def segment_spans(completion: str) -> tuple[Segment, ...]:
    """Ordered segments of a completion, splitting on section headings.

    Text before the first heading is the preamble; the closing
    "Final Answer" line and everything after it form the postamble.
    The segments partition the input line-exactly (see reassemble).
    """
    segments: list[Segment] = []
    key = PREAMBLE
    header = ""
    body: list[str] = []

    def flush() -> None:
        if body or header:
            segments.append(Segment(key, header, tuple(body)))

    in_postamble = False
    for line in completion.split("\n"):
        if not in_postamble:
            hit = _header_key(line)
            if hit is not None:
                flush()
                key, header, body = hit, line, []
                continue
            if _is_final_answer_line(line):
                flush()
                key, header, body = POSTAMBLE, "", [line]
                in_postamble = True
                continue
        body.append(line)
    flush()
    return tuple(segments)


def segment_trace(completion: str) -> dict[str, str]:
    """Section-keyed text of a completion; absent sections map to ''.

    A completion with no recognized headings lands entirely in the
    preamble.  Repeated headings concatenate.
    """
    out: dict[str, str] = {k: "" for k in SECTION_KEYS}
    for seg in segment_spans(completion):
        if out[seg.key]:
            out[seg.key] += "\n" + seg.body
        else:
            out[seg.key] = seg.body
    return out


def reassemble(segments: tuple[Segment, ...]) -> str:
    """Exact inverse of segment_spans: headers and bodies, in order."""
    lines: list[str] = []
    for seg in segments:
        if seg.header_line:
            lines.append(seg.header_line)
        lines.extend(seg.lines)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# math-token lexer (frozen; see docs in count_math_tokens)
# ---------------------------------------------------------------------------

MATH_LEXER_VERSION = "mtl-1"

_OPERATORS = "+−-×*/=≤≥<>∧∨≡√"
_NUMERAL = re.compile(r"\d(?:\d|\{,\}\d|,\d)*(?:\.\d+)?|\.\d+")
_IDENT = re.compile(r"[A-Za-z](?:[A-Za-z0-9_']*)")
_BACKSLASH_CMD = re.compile(r"\\[A-Za-z]+")


def _find_math_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) character ranges lying inside math delimiters.

    Supported: $...$ and $$...$$ closing on the same line, and \\(...\\)
    / \\[...\\] closing anywhere.  Unclosed delimiters are literal text.
    """
    spans: list[tuple[int, int]] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\\" and i + 1 < n and text[i + 1] in "([":
            closer = "\\)" if text[i + 1] == "(" else "\\]"
            end = text.find(closer, i + 2)
            if end >= 0:
                spans.append((i + 2, end))
                i = end + 2
                continue
        elif ch == "$":
            double = i + 1 < n and text[i + 1] == "$"
            opener_len = 2 if double else 1
            closer = "$$" if double else "$"
            line_end = text.find("\n", i)
            if line_end < 0:
                line_end = n
            end = text.find(closer, i + opener_len)
            if 0 <= end < line_end:
                spans.append((i + opener_len, end))
                i = end + opener_len
                continue
        i += 1
    return spans


def _lex_span(text: str) -> int:
    """Token count inside a math span: numerals, identifiers, operators,
    parentheses, backslash commands."""
    count = 0
    i = 0
    n = len(text)
    prev_kind = "start"
    while i < n:
        ch = text[i]
        if ch.isspace() or ch in "{}" and not text.startswith("{,}", i):
            i += 1
            continue
        m = _BACKSLASH_CMD.match(text, i)
        if m:
            count += 1
            i = m.end()
            prev_kind = "cmd"
            continue
        if ch in "+-−" and prev_kind in ("start", "op", "open"):
            nxt = text[i + 1] if i + 1 < n else ""
            if nxt.isdigit() or nxt == ".":
                m = _NUMERAL.match(text, i + 1)
                count += 1
                i = m.end() if m else i + 1
                prev_kind = "num"
                continue
        if ch in _OPERATORS:
            count += 1
            i += 1
            prev_kind = "op"
            continue
        if ch in "()":
            count += 1
            i += 1
            prev_kind = "open" if ch == "(" else "close"
            continue
        m = _NUMERAL.match(text, i)
        if m:
            count += 1
            i = m.end()
            prev_kind = "num"
            continue
        m = _IDENT.match(text, i)
        if m:
            count += 1
            i = m.end()
            prev_kind = "ident"
            continue
        i += 1
        prev_kind = "other"
    return count


def _lex_prose(text: str) -> int:
    """Token count outside math spans: numerals, operators, and identifiers
    standing directly next to an operator (spaces ignored)."""
    tokens: list[tuple[str, int, int]] = []  # (kind, start, end)
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        m = _NUMERAL.match(text, i)
        if m:
            tokens.append(("num", i, m.end()))
            i = m.end()
            continue
        if ch in _OPERATORS:
            tokens.append(("op", i, i + 1))
            i += 1
            continue
        m = _IDENT.match(text, i)
        if m:
            tokens.append(("ident", i, m.end()))
            i = m.end()
            continue
        tokens.append(("other", i, i + 1))
        i += 1
    count = 0
    for idx, (kind, _, _) in enumerate(tokens):
        if kind in ("num", "op"):
            count += 1
        elif kind == "ident":
            before = tokens[idx - 1][0] if idx > 0 else ""
            after = tokens[idx + 1][0] if idx + 1 < len(tokens) else ""
            if before == "op" or after == "op":
                count += 1
    return count


def count_math_tokens(text: str) -> int:
    """Count mathematical tokens under the frozen lexer ``mtl-1``.

    Inside math delimiters every numeral, identifier, operator,
    parenthesis, and backslash command counts one.  Outside them,
    numerals and operators count, and an identifier counts only when it
    touches an operator (whitespace ignored), so prose words stay out.
    """
    spans = _find_math_spans(text)
    count = 0
    cursor = 0
    for start, end in spans:
        count += _lex_prose(text[cursor:start])
        count += _lex_span(text[start:end])
        # skip past the closing delimiter; its characters are not tokens
        cursor = end
    count += _lex_prose(text[cursor:])
    return count


# ---------------------------------------------------------------------------
# length profiles
# ---------------------------------------------------------------------------

_CJK = re.compile(r"[㐀-鿿豈-﫿]")


def count_words(text: str, language: str = "en") -> int:
    """Whitespace-delimited word count; ideographic text counts characters.

    For ``zh`` each ideograph is one word and each maximal non-ideograph
    run inside a token is one word, since the text carries no spaces.
    """
    if not language.lower().startswith("zh"):
        return len(text.split())
    total = 0
    for token in text.split():
        cjk = len(_CJK.findall(token))
        rest = _CJK.sub(" ", token).split()
        total += cjk + len(rest)
    return total


@dataclass(frozen=True)
class StepLengthProfile:
    """Per-section word and math-token counts for one completion."""

    words: dict[str, int]
    math_tokens: dict[str, int]
    language: str = "en"

    @property
    def total_words(self) -> int:
        return sum(self.words.values())

    @property
    def total_math_tokens(self) -> int:
        return sum(self.math_tokens.values())

    def to_csv_row(self, trace_id: str) -> list[str]:
        row = [trace_id, self.language]
        for key in SECTION_KEYS:
            row.append(str(self.words.get(key, 0)))
            row.append(str(self.math_tokens.get(key, 0)))
        row.append(str(self.total_words))
        row.append(str(self.total_math_tokens))
        return row

    @staticmethod
    def csv_header() -> list[str]:
        row = ["trace_id", "language"]
        for key in SECTION_KEYS:
            row.append(f"{key}_words")
            row.append(f"{key}_math_tokens")
        row.append("total_words")
        row.append("total_math_tokens")
        return row


def profile_trace(completion: str, language: str = "en") -> StepLengthProfile:
    sections = segment_trace(completion)
    return StepLengthProfile(
        words={k: count_words(v, language) for k, v in sections.items()},
        math_tokens={k: count_math_tokens(v) for k, v in sections.items()},
        language=language,
    )


# ---------------------------------------------------------------------------
# robustness aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RobustnessSummary:
    dataset: str
    method: str
    variant_accuracies: tuple[Fraction, ...]
    baseline_accuracy: Fraction | None

    @property
    def mean(self) -> Fraction:
        return sum(self.variant_accuracies, Fraction(0)) / len(self.variant_accuracies)

    @property
    def variance(self) -> Fraction:
        """Sample variance (n-1 denominator), exact."""
        mean = self.mean
        n = len(self.variant_accuracies)
        return sum(((x - mean) ** 2 for x in self.variant_accuracies), Fraction(0)) / (n - 1)

    @property
    def stdev(self) -> float:
        return statistics.stdev(float(x) for x in self.variant_accuracies)

    @property
    def delta_vs_baseline(self) -> Fraction | None:
        if self.baseline_accuracy is None:
            return None
        return self.mean - self.baseline_accuracy

    def display_mean(self) -> Decimal:
        return round_half_up(self.mean, 2)

    def display_stdev(self) -> Decimal:
        return round_half_up(Fraction(self.stdev).limit_denominator(10**12), 2)


def summarize_robustness(
    dataset: str,
    method: str,
    variant_accuracies: list[Fraction],
    baseline_accuracy: Fraction | None = None,
) -> RobustnessSummary:
    """Spread statistics over option-swapped rerun accuracies.

    Needs at least two variant runs; the standard deviation uses the
    sample (n-1) denominator.
    """
    if len(variant_accuracies) < 2:
        raise InsufficientDataError(
            f"{dataset}/{method}: need at least 2 variant runs, got {len(variant_accuracies)}"
        )
    return RobustnessSummary(
        dataset=dataset,
        method=method,
        variant_accuracies=tuple(variant_accuracies),
        baseline_accuracy=baseline_accuracy,
    )


def load_robustness_csv(path: str | Path) -> list[RobustnessSummary]:
    """Read variant accuracies from a CSV of dataset,method,variant,accuracy.

    Variant 0 is the unperturbed baseline; variants 1+ are swapped runs.
    Rows group by (dataset, method) in first-seen order.
    """
    groups: dict[tuple[str, str], dict[int, Fraction]] = {}
    order: list[tuple[str, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != [
            "dataset", "method", "variant", "accuracy",
        ]:
            raise AnalysisError(
                f"{path}: expected header dataset,method,variant,accuracy, got {header}"
            )
        for row in reader:
            if not row:
                continue
            dataset, method, variant_text, accuracy_text = (c.strip() for c in row[:4])
            key = (dataset, method)
            if key not in groups:
                groups[key] = {}
                order.append(key)
            try:
                variant = int(variant_text)
                accuracy = Fraction(Decimal(accuracy_text))
            except (ValueError, ArithmeticError) as exc:
                raise AnalysisError(f"{path}: bad row {row}: {exc}") from exc
            if variant in groups[key]:
                raise AnalysisError(f"{path}: duplicate variant {variant} for {key}")
            groups[key][variant] = accuracy
    out: list[RobustnessSummary] = []
    for dataset, method in order:
        cells = groups[(dataset, method)]
        variants = [cells[v] for v in sorted(cells) if v > 0]
        out.append(
            summarize_robustness(dataset, method, variants, cells.get(0))
        )
    return out
