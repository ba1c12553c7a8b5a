"""Text and number canonicalisation shared by loaders and scoring.

Canonical comparison is deliberately lossy (case, whitespace, currency,
thousands separators, light markup) but never rewrites words into numbers
or vice versa.
"""

from __future__ import annotations

import re
import unicodedata
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

# Thousands separator between a digit and a 3-digit group: "6,500,000" -> "6500000".
_THOUSANDS = re.compile(r"(?<=\d),(?=\d{3}(?!\d))")
# LaTeX-style separator used inside numerals: "50{,}000".
_BRACED_COMMA = re.compile(r"(?<=\d)\{,\}(?=\d)")
# Characters that carry no content for answer comparison.
_MARKUP_CHARS = "*_`$€£¥＄￥%"
_WS = re.compile(r"\s+")

_NUMBER_STRICT = re.compile(r"[-+]?(?:\d+(?:\.\d+)?|\.\d+)(?:/\d+)?")


def strip_separators(text: str) -> str:
    """Remove thousands separators from digit groups, both "," and "{,}"."""
    out = _BRACED_COMMA.sub("", text)
    while True:
        nxt = _THOUSANDS.sub("", out)
        if nxt == out:
            return out
        out = nxt


def canon(text: str) -> str:
    """Canonical form used for equality of answers and choice texts."""
    s = unicodedata.normalize("NFKC", text)
    s = s.replace("\\$", "$").replace("\\(", "").replace("\\)", "")
    s = strip_separators(s)
    s = "".join(ch for ch in s if ch not in _MARKUP_CHARS)
    s = s.casefold()
    s = _WS.sub(" ", s).strip()
    return s.rstrip(".")


def parse_number(text: str, strict: bool = True) -> Fraction | None:
    """Parse a decimal, integer, or a/b string into an exact Fraction.

    With strict=True the whole (canonicalised) string must be the number,
    bar surrounding currency or percent dressing. With strict=False the
    first number embedded in the text is used, which suits choice texts
    like "45 miles".
    """
    s = canon(text)
    if not s:
        return None
    if strict:
        if _NUMBER_STRICT.fullmatch(s) is None:
            return None
        token = s
    else:
        m = _NUMBER_STRICT.search(s)
        if m is None:
            return None
        token = m.group(0)
    try:
        if "/" in token:
            num, den = token.split("/", 1)
            return Fraction(Fraction(num), Fraction(den))
        return Fraction(token)
    except (ValueError, ZeroDivisionError):
        return None


def round_half_up(value: Fraction, places: int = 2) -> Decimal:
    """Exact Fraction -> Decimal with ROUND_HALF_UP display rounding."""
    quantum = Decimal(1).scaleb(-places)
    return (Decimal(value.numerator) / Decimal(value.denominator)).quantize(
        quantum, rounding=ROUND_HALF_UP
    )


def format_percent(value: Fraction, places: int = 2) -> str:
    return str(round_half_up(value, places))
