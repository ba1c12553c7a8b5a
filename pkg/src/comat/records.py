"""Question records: loading from benchmark formats, validation, option swapping.

Every supported input format is mapped onto one canonical record shape so the
rest of the pipeline never branches on dataset quirks.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import string
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterator

from .errors import ComatError
from .normalize import canon, parse_number

LABEL_ALPHABET = string.ascii_uppercase

FORMATS = ("aqua", "gsm8k", "mmlu-redux", "gaokao-mcq", "olympiadbench", "mgsm")


class RecordError(ComatError):
    pass


class LineParseError(RecordError):
    """Malformed JSON input line; carries the byte offset of the failure."""

    def __init__(self, message: str, *, byte_offset: int, line_number: int | None = None):
        self.byte_offset = byte_offset
        self.line_number = line_number
        where = f" (line {line_number}, byte {byte_offset})" if line_number else f" (byte {byte_offset})"
        super().__init__(message + where)


class ValidationError(RecordError):
    """Schema violation; names the offending field."""

    def __init__(self, message: str, *, field_name: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


class UnsupportedRecordError(RecordError):
    pass


class DistractorError(RecordError):
    pass


class GoldKind(str, Enum):
    OPTION_LABEL = "option-label"
    LITERAL = "literal"


class DistractorPolicy(str, Enum):
    BORROW_FROM_SIBLING = "borrow-from-sibling"
    SYNTHETIC_NUMERIC = "synthetic-numeric"


@dataclass(frozen=True)
class GoldAnswer:
    kind: GoldKind
    value: str

    def to_json_dict(self) -> dict[str, str]:
        return {"kind": self.kind.value, "value": self.value}

    @classmethod
    def from_json_dict(cls, d: dict[str, str]) -> "GoldAnswer":
        return cls(GoldKind(d["kind"]), d["value"])


@dataclass(frozen=True)
class QuestionRecord:
    """One benchmark question in canonical form.

    choices holds (label, text) pairs in presentation order; None for
    free-answer items. gold either names a label or is a literal value.
    """

    id: str
    stem: str
    gold: GoldAnswer
    choices: tuple[tuple[str, str], ...] | None = None
    language: str = "en"
    source: str = ""

    def __post_init__(self) -> None:
        if not self.stem or not self.stem.strip():
            raise ValidationError("stem is empty", field_name="stem")
        if self.choices is not None:
            labels = [lab for lab, _ in self.choices]
            if len(set(labels)) != len(labels):
                raise ValidationError("duplicate option labels", field_name="choices")
            if self.gold.kind is GoldKind.OPTION_LABEL:
                if self.gold.value not in labels:
                    raise ValidationError(
                        f"gold label {self.gold.value!r} not among options {labels}",
                        field_name="gold",
                    )
            else:
                hits = [t for _, t in self.choices if canon(t) == canon(self.gold.value)]
                if len(hits) != 1:
                    raise ValidationError(
                        "literal gold must equal exactly one choice text",
                        field_name="gold",
                    )
        elif self.gold.kind is GoldKind.OPTION_LABEL:
            raise ValidationError(
                "option-label gold requires choices", field_name="gold"
            )

    @property
    def is_mcq(self) -> bool:
        return self.choices is not None

    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.choices or ())

    def choice_text(self, label: str) -> str:
        for lab, text in self.choices or ():
            if lab == label:
                return text
        raise KeyError(label)

    def gold_choice(self) -> tuple[str, str] | None:
        """The (label, text) pair the gold answer designates, if MCQ."""
        if self.choices is None:
            return None
        if self.gold.kind is GoldKind.OPTION_LABEL:
            return self.gold.value, self.choice_text(self.gold.value)
        for lab, text in self.choices:
            if canon(text) == canon(self.gold.value):
                return lab, text
        return None

    def gold_text(self) -> str:
        """The answer as text: the designated choice text, or the literal."""
        picked = self.gold_choice()
        if picked is not None:
            return picked[1]
        return self.gold.value

    def to_json_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "id": self.id,
            "stem": self.stem,
            "gold": self.gold.to_json_dict(),
            "language": self.language,
            "source": self.source,
        }
        if self.choices is not None:
            d["choices"] = [[lab, text] for lab, text in self.choices]
        return d

    @classmethod
    def from_json_dict(cls, d: dict[str, Any]) -> "QuestionRecord":
        choices = d.get("choices")
        return cls(
            id=d["id"],
            stem=d["stem"],
            gold=GoldAnswer.from_json_dict(d["gold"]),
            choices=tuple((lab, text) for lab, text in choices) if choices is not None else None,
            language=d.get("language", "en"),
            source=d.get("source", ""),
        )


# ---------------------------------------------------------------------------
# format adapters
# ---------------------------------------------------------------------------

def _require(row: dict[str, Any], key: str) -> Any:
    if key not in row or row[key] is None:
        raise ValidationError("missing required field", field_name=key)
    return row[key]


def _split_option(raw: str, position: int) -> tuple[str, str]:
    """Split "A) 3" / "B.4" style options into (label, text)."""
    s = raw.strip()
    if len(s) >= 2 and s[0].isalpha() and s[1] in ")].:、．":
        return s[0].upper(), s[2:].strip()
    if len(s) >= 3 and s[0].isalpha() and s[1] == " " and s[2] in ")].:":
        return s[0].upper(), s[3:].strip()
    return LABEL_ALPHABET[position], s


def _parse_aqua(row: dict[str, Any], rid: str) -> QuestionRecord:
    options = _require(row, "options")
    if not isinstance(options, list) or not options:
        raise ValidationError("options must be a non-empty list", field_name="options")
    choices = tuple(_split_option(str(o), i) for i, o in enumerate(options))
    correct = str(_require(row, "correct")).strip().upper()
    letters = [c for c in correct if c.isalpha()]
    if not letters:
        raise ValidationError("no option letter in value", field_name="correct")
    return QuestionRecord(
        id=rid,
        stem=str(_require(row, "question")),
        gold=GoldAnswer(GoldKind.OPTION_LABEL, letters[0]),
        choices=choices,
        language=str(row.get("language", "en")),
        source=str(row.get("source", "aqua")),
    )


def _parse_gsm8k(row: dict[str, Any], rid: str) -> QuestionRecord:
    answer = str(_require(row, "answer"))
    if "####" not in answer:
        raise ValidationError("no '####' final-value delimiter", field_name="answer")
    value = answer.rsplit("####", 1)[1].strip().splitlines()[0].strip() if answer.rsplit("####", 1)[1].strip() else ""
    if not value:
        raise ValidationError("empty value after '####'", field_name="answer")
    return QuestionRecord(
        id=rid,
        stem=str(_require(row, "question")),
        gold=GoldAnswer(GoldKind.LITERAL, value),
        language=str(row.get("language", "en")),
        source=str(row.get("source", "gsm8k")),
    )


def _parse_mmlu_redux(row: dict[str, Any], rid: str) -> QuestionRecord:
    choices = _require(row, "choices")
    if not isinstance(choices, list) or not choices:
        raise ValidationError("choices must be a non-empty list", field_name="choices")
    idx = _require(row, "answer")
    if not isinstance(idx, int) or not 0 <= idx < len(choices):
        raise ValidationError(f"answer index {idx!r} out of range", field_name="answer")
    pairs = tuple((LABEL_ALPHABET[i], str(t)) for i, t in enumerate(choices))
    return QuestionRecord(
        id=rid,
        stem=str(_require(row, "question")),
        gold=GoldAnswer(GoldKind.OPTION_LABEL, LABEL_ALPHABET[idx]),
        choices=pairs,
        language=str(row.get("language", "en")),
        source=str(row.get("source", "mmlu-redux")),
    )


def _parse_gaokao_mcq(row: dict[str, Any], rid: str) -> QuestionRecord:
    options = _require(row, "options")
    if not isinstance(options, list) or not options:
        raise ValidationError("options must be a non-empty list", field_name="options")
    choices = tuple(_split_option(str(o), i) for i, o in enumerate(options))
    answer = str(_require(row, "answer"))
    letters = [c for c in answer.upper() if c.isalpha()]
    if not letters:
        raise ValidationError("no option letter in value", field_name="answer")
    return QuestionRecord(
        id=rid,
        stem=str(_require(row, "question")),
        gold=GoldAnswer(GoldKind.OPTION_LABEL, letters[0]),
        choices=choices,
        language=str(row.get("language", "zh")),
        source=str(row.get("source", "gaokao-mcq")),
    )


def _parse_olympiadbench(row: dict[str, Any], rid: str) -> QuestionRecord:
    final = _require(row, "final_answer")
    if isinstance(final, list):
        if not final:
            raise ValidationError("empty final_answer list", field_name="final_answer")
        final = final[0]
    return QuestionRecord(
        id=rid,
        stem=str(_require(row, "question")),
        gold=GoldAnswer(GoldKind.LITERAL, str(final)),
        language=str(row.get("language", "en")),
        source=str(row.get("source", "olympiadbench")),
    )


def _parse_mgsm(row: dict[str, Any], rid: str) -> QuestionRecord:
    value = _require(row, "answer_number")
    if isinstance(value, float) and value.is_integer():
        text = str(int(value))
    else:
        text = str(value)
    return QuestionRecord(
        id=rid,
        stem=str(_require(row, "question")),
        gold=GoldAnswer(GoldKind.LITERAL, text),
        language=str(row.get("language", "en")),
        source=str(row.get("source", "mgsm")),
    )


_ADAPTERS = {
    "aqua": _parse_aqua,
    "gsm8k": _parse_gsm8k,
    "mmlu-redux": _parse_mmlu_redux,
    "gaokao-mcq": _parse_gaokao_mcq,
    "olympiadbench": _parse_olympiadbench,
    "mgsm": _parse_mgsm,
}


def parse_record(line: str, fmt: str, *, default_id: str | None = None,
                 line_number: int | None = None) -> QuestionRecord:
    """Parse one JSONL line of the given format into a QuestionRecord."""
    if fmt not in _ADAPTERS:
        raise ValidationError(f"unknown format {fmt!r}", field_name="format")
    try:
        row = json.loads(line)
    except json.JSONDecodeError as exc:
        offset = len(line[: exc.pos].encode("utf-8"))
        raise LineParseError(
            f"malformed JSON: {exc.msg}", byte_offset=offset, line_number=line_number
        ) from exc
    if not isinstance(row, dict):
        raise LineParseError("JSON line is not an object", byte_offset=0, line_number=line_number)
    rid = str(row.get("id") or default_id or f"{fmt}-{line_number or 0:05d}")
    return _ADAPTERS[fmt](row, rid)


def iter_parsed(path: str | Path, fmt: str) -> Iterator[tuple[int, QuestionRecord | RecordError]]:
    """Yield (line_number, record-or-error) for every non-blank line.

    Never raises on bad rows: each failure surfaces as a structured error.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, parse_record(
                    line, fmt, default_id=f"{fmt}-{lineno:05d}", line_number=lineno
                )
            except RecordError as err:
                yield lineno, err


def load_dataset(path: str | Path, fmt: str, limit: int | None = None
                 ) -> tuple[list[QuestionRecord], list[tuple[int, RecordError]]]:
    records: list[QuestionRecord] = []
    errors: list[tuple[int, RecordError]] = []
    for lineno, item in iter_parsed(path, fmt):
        if isinstance(item, RecordError):
            errors.append((lineno, item))
            continue
        records.append(item)
        if limit is not None and len(records) >= limit:
            break
    return records, errors


# ---------------------------------------------------------------------------
# option perturbation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationPlan:
    """How to build option-swapped variants of a record set."""

    variant_count: int = 5
    repeats_per_variant: int = 3
    seed: int = 0
    distractor_policy: DistractorPolicy = DistractorPolicy.BORROW_FROM_SIBLING
    # Choice texts borrowed from other records of the same dataset; consulted
    # only by the borrow-from-sibling policy.
    sibling_pool: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.variant_count < 1:
            raise ValueError("variant_count must be >= 1")
        if self.repeats_per_variant < 1:
            raise ValueError("repeats_per_variant must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


def build_sibling_pool(records: list[QuestionRecord], exclude_id: str | None = None
                       ) -> tuple[str, ...]:
    pool: list[str] = []
    for rec in records:
        if rec.id == exclude_id or rec.choices is None:
            continue
        pool.extend(text for _, text in rec.choices)
    return tuple(pool)


def _derive_rng(plan: PerturbationPlan, record_id: str, variant_index: int) -> random.Random:
    material = f"{plan.seed}:{record_id}:{variant_index}".encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _format_like(template: str, value: Fraction) -> str:
    """Render value in the visual style of template (commas, decimal places)."""
    decimal_part = re.search(r"\d+\.(\d+)", template)
    if value.denominator == 1:
        if re.search(r"\d,\d{3}", template):
            return f"{value.numerator:,}"
        return str(value.numerator)
    places = len(decimal_part.group(1)) if decimal_part else 2
    return f"{float(value):.{min(places, 6)}f}"


def _synthetic_numeric_distractor(record: QuestionRecord, rng: random.Random) -> str:
    assert record.choices is not None
    gold = record.gold_choice()
    ordered = ([gold] if gold else []) + [c for c in record.choices if c != gold]
    existing = {canon(t) for _, t in record.choices}
    for label, text in ordered:
        base = parse_number(text, strict=False)
        if base is None:
            continue
        for _ in range(100):
            scale = rng.choice((2, 3, 5, 10, Fraction(1, 2), Fraction(3, 2)))
            shift = rng.choice((0, 1, -1, 7, 13))
            candidate = abs(base) * scale + shift if base != 0 else Fraction(shift or 1)
            rendered = _format_like(text, candidate)
            if canon(rendered) not in existing:
                return rendered
    raise DistractorError(
        f"record {record.id}: no distinct numeric distractor after 100 attempts"
    )


def _borrowed_distractor(record: QuestionRecord, plan: PerturbationPlan,
                         rng: random.Random) -> str:
    assert record.choices is not None
    if not plan.sibling_pool:
        raise DistractorError(
            f"record {record.id}: borrow-from-sibling needs a non-empty sibling pool"
        )
    existing = {canon(t) for _, t in record.choices}
    for _ in range(100):
        candidate = rng.choice(plan.sibling_pool)
        if canon(candidate) not in existing:
            return candidate
    raise DistractorError(
        f"record {record.id}: no distinct sibling distractor after 100 attempts"
    )


def swap_options(record: QuestionRecord, plan: PerturbationPlan,
                 variant_index: int) -> QuestionRecord:
    """Build one option-swapped variant: permuted choices plus one distractor.

    Deterministic in (record, plan, variant_index); the input record is never
    modified. Labels are reassigned alphabetically in the new order and the
    gold answer is remapped to keep designating the same choice text.
    """
    if record.choices is None or len(record.choices) < 2:
        raise UnsupportedRecordError(
            f"record {record.id} has no swappable options"
        )
    if not 0 <= variant_index < plan.variant_count:
        raise ValueError(
            f"variant_index {variant_index} outside plan range 0..{plan.variant_count - 1}"
        )
    if len(record.choices) + 1 > len(LABEL_ALPHABET):
        raise UnsupportedRecordError(f"record {record.id} has too many options")

    rng = _derive_rng(plan, record.id, variant_index)
    if plan.distractor_policy is DistractorPolicy.SYNTHETIC_NUMERIC:
        distractor = _synthetic_numeric_distractor(record, rng)
    else:
        distractor = _borrowed_distractor(record, plan, rng)

    gold_pick = record.gold_choice()
    if gold_pick is None:
        raise ValidationError("gold does not designate a choice", field_name="gold")
    gold_index = [lab for lab, _ in record.choices].index(gold_pick[0])

    texts = [text for _, text in record.choices] + [distractor]
    order = list(range(len(texts)))
    rng.shuffle(order)
    new_choices = tuple(
        (LABEL_ALPHABET[pos], texts[src]) for pos, src in enumerate(order)
    )
    new_gold_label = LABEL_ALPHABET[order.index(gold_index)]
    return replace(
        record,
        choices=new_choices,
        gold=GoldAnswer(GoldKind.OPTION_LABEL, new_gold_label),
    )


def expand_perturbation_suite(record: QuestionRecord, plan: PerturbationPlan
                              ) -> list[tuple[int, int, QuestionRecord]]:
    """All (variant_index, repeat_index, swapped_record) entries for one record.

    Entries sharing a variant index carry the identical swapped record;
    repeats differ only in repeat_index.
    """
    out: list[tuple[int, int, QuestionRecord]] = []
    for vi in range(plan.variant_count):
        swapped = swap_options(record, plan, vi)
        for ri in range(plan.repeats_per_variant):
            out.append((vi, ri, swapped))
    return out


def perturbed_to_json_dict(record: QuestionRecord, plan: PerturbationPlan,
                           variant_index: int, repeat_index: int) -> dict[str, Any]:
    """Serialise a swapped record in MCQ-options JSONL shape plus provenance."""
    if record.choices is None:
        raise UnsupportedRecordError(f"record {record.id} has no options")
    gold_pick = record.gold_choice()
    if gold_pick is None:
        raise ValidationError("gold does not designate a choice", field_name="gold")
    return {
        "id": record.id,
        "question": record.stem,
        "options": [f"{lab}) {text}" for lab, text in record.choices],
        "correct": gold_pick[0],
        "variant_index": variant_index,
        "repeat_index": repeat_index,
        "seed": plan.seed,
    }
