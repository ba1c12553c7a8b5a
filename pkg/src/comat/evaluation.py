"""Answer extraction and scoring.

Completions are reduced to a typed answer (option label, number, or free
text), compared against gold either exactly or through a scripted
yes/no judge call, and aggregated into run-level accuracy.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from decimal import Decimal
from fractions import Fraction

from .errors import ComatError
from .gateway import CompletionRequest, CompletionResponse, Gateway, GenerationParams, Message
from .normalize import canon, parse_number, round_half_up, strip_separators
from .records import GoldKind, QuestionRecord

TRACE_SCHEMA_VERSION = "1"

LABEL = "label"
NUMBER = "number"
TEXT = "text"

LOW_CONFIDENCE_THRESHOLD = 0.3


class EvaluationError(ComatError):
    pass


class EmptyRunError(EvaluationError):
    """A summary was requested for a run with no traces."""


class InvalidVerdictError(EvaluationError):
    """The judge failed to answer 0 or 1, even after a retry."""

    def __init__(self, verdict_text: str) -> None:
        super().__init__(f"judge verdict is not 0 or 1: {verdict_text!r}")
        self.verdict_text = verdict_text


@dataclass(frozen=True)
class ExtractedAnswer:
    """The answer a completion commits to, in reduced form."""

    kind: str  # label | number | text
    value: str
    raw_tail: str = ""

    def as_fraction(self) -> Fraction | None:
        return parse_number(self.value) if self.kind == NUMBER else None

    def is_empty(self) -> bool:
        return self.kind == TEXT and not self.value

    def to_json_dict(self) -> dict[str, str]:
        return {"kind": self.kind, "value": self.value, "raw_tail": self.raw_tail}

    @classmethod
    def from_json_dict(cls, payload: dict[str, str]) -> ExtractedAnswer:
        return cls(
            kind=payload["kind"],
            value=payload["value"],
            raw_tail=payload.get("raw_tail", ""),
        )


# ---------------------------------------------------------------------------
# final-answer extraction
# ---------------------------------------------------------------------------

# "Final Answer" with or without a colon, or a bare "Answer:".  The last
# occurrence wins so restatements earlier in the reasoning never shadow the
# model's actual commitment.
_MARKER = re.compile(r"(?i)\bfinal\s+answer\b|\banswer\b(?=\s*:)")
_MARKER_TRIM = re.compile(r"^[\s*_:`]+")
_TAIL_TRIM = re.compile(r"[\s*_`]+$")
_LOOSE_NUMBER = re.compile(r"[-+]?(?:\d+(?:\.\d+)?|\.\d+)(?:/\d+)?")


def _marker_tail(text: str) -> str | None:
    """Text following the last answer marker, or None when no marker exists."""
    last = None
    for m in _MARKER.finditer(text):
        last = m
    if last is None:
        return None
    rest = _MARKER_TRIM.sub("", text[last.end():].lstrip("\r"))
    line, _, remainder = rest.partition("\n")
    line = _TAIL_TRIM.sub("", line.strip())
    if line:
        return line
    for candidate in remainder.split("\n"):
        candidate = _TAIL_TRIM.sub("", _MARKER_TRIM.sub("", candidate.strip()))
        if candidate:
            return candidate
    return ""


def _anchored_label(tail: str, labels: tuple[str, ...]) -> str | None:
    """A choice label at the start of the tail, e.g. "A", "(B)", "C."."""
    stripped = tail.lstrip("([{ \t'\"")
    if not stripped:
        return None
    head = stripped[0].upper()
    if head not in labels:
        return None
    rest = stripped[1:]
    if rest and rest[0].isalnum():
        return None
    return head


def _standalone_label(text: str, labels: tuple[str, ...]) -> str | None:
    """A line that is nothing but a choice label, searched from the end."""
    for line in reversed(text.strip().split("\n")):
        line = line.strip()
        if not line:
            continue
        cleaned = line.strip("()[]{}*_`'\". \t")
        if cleaned.upper() in labels and len(cleaned) == 1:
            return cleaned.upper()
        return None
    return None


def _number_from(text: str, *, last: bool = False) -> Fraction | None:
    cleaned = strip_separators(text).replace("\\$", "").replace("$", "")
    found = _LOOSE_NUMBER.findall(cleaned)
    if not found:
        return None
    token = found[-1] if last else found[0]
    return parse_number(token)


def _format_fraction(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def extract_final_answer(completion_text: str, record: QuestionRecord) -> ExtractedAnswer:
    """Reduce a completion to the answer it commits to.

    Precedence: an explicit answer marker beats trailing content; within
    the marker tail, an anchored option label beats a number beats free
    text.  With no marker at all, the last non-empty line is inspected for
    a standalone label or a terminal number.  An empty completion reduces
    to empty text, which scores as invalid.
    """
    labels = record.labels() if record.is_mcq else ()
    tail = _marker_tail(completion_text)

    if tail:
        if labels:
            hit = _anchored_label(tail, labels)
            if hit is None:
                hit = _standalone_label(tail, labels)
            if hit is not None:
                return ExtractedAnswer(LABEL, hit, tail)
        num = _number_from(tail)
        if num is not None:
            return ExtractedAnswer(NUMBER, _format_fraction(num), tail)
        return ExtractedAnswer(TEXT, canon(tail), tail)

    last_line = ""
    for line in reversed(completion_text.strip().split("\n")):
        if line.strip():
            last_line = line.strip()
            break
    if not last_line:
        return ExtractedAnswer(TEXT, "", "")
    if labels:
        hit = _standalone_label(last_line, labels)
        if hit is not None:
            return ExtractedAnswer(LABEL, hit, last_line)
    num = _number_from(last_line, last=True)
    if num is not None:
        return ExtractedAnswer(NUMBER, _format_fraction(num), last_line)
    return ExtractedAnswer(TEXT, canon(last_line), last_line)


# ---------------------------------------------------------------------------
# exact scoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatchVerdict:
    correct: bool
    path: str  # label | matched | literal | unresolved | invalid
    resolved_label: str | None = None


def _values_equal(a: str, b: str) -> bool:
    fa, fb = parse_number(canon(a)), parse_number(canon(b))
    if fa is not None and fb is not None:
        return fa == fb
    return canon(a) == canon(b)


def exact_match(extracted: ExtractedAnswer, record: QuestionRecord) -> MatchVerdict:
    """Compare an extracted answer with gold, by choice text for MCQs."""
    if extracted.is_empty():
        return MatchVerdict(False, "invalid")

    if record.is_mcq:
        gold = record.gold_choice()
        if gold is None:
            return MatchVerdict(_values_equal(extracted.value, record.gold_text()), "literal")
        gold_label, gold_text = gold
        if extracted.kind == LABEL:
            text = record.choice_text(extracted.value)
            return MatchVerdict(
                correct=canon(text) == canon(gold_text),
                path="label",
                resolved_label=extracted.value,
            )
        for label, text in record.choices or ():
            if _values_equal(extracted.value, text):
                return MatchVerdict(
                    correct=canon(text) == canon(gold_text),
                    path="matched",
                    resolved_label=label,
                )
        return MatchVerdict(False, "unresolved")

    return MatchVerdict(_values_equal(extracted.value, record.gold_text()), "literal")


# ---------------------------------------------------------------------------
# nearest-option matching
# ---------------------------------------------------------------------------

def levenshtein(a: str, b: str) -> int:
    """Classic edit distance, O(len(a) * len(b)) with two rows."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class OptionMatch:
    label: str
    score: float
    mode: str  # numeric | textual
    low_confidence: bool


def match_to_option(extracted: ExtractedAnswer, record: QuestionRecord) -> OptionMatch:
    """Map an answer onto the nearest provided option.

    Numbers are matched by absolute difference; everything else by
    normalized edit similarity.  Ties break to the alphabetically first
    label.  A best textual similarity under 0.3 is flagged low-confidence.
    """
    if not record.is_mcq:
        raise EvaluationError("option matching needs a record with choices")
    choices = record.choices or ()

    target_num = parse_number(canon(extracted.value)) if extracted.value else None
    if target_num is not None:
        numeric: list[tuple[Fraction, str]] = []
        for label, text in choices:
            val = parse_number(canon(text), strict=False)
            if val is not None:
                numeric.append((abs(val - target_num), label))
        if numeric:
            diff, label = min(numeric)
            score = 1.0 if diff == 0 else 1.0 / (1.0 + float(diff))
            return OptionMatch(label, score, "numeric", low_confidence=False)

    target = canon(extracted.value)
    best_label, best_sim = choices[0][0], -1.0
    for label, text in choices:
        other = canon(text)
        longest = max(len(target), len(other))
        sim = 1.0 if longest == 0 else 1.0 - levenshtein(target, other) / longest
        if sim > best_sim:
            best_label, best_sim = label, sim
    return OptionMatch(
        best_label,
        best_sim,
        "textual",
        low_confidence=best_sim < LOW_CONFIDENCE_THRESHOLD,
    )


# ---------------------------------------------------------------------------
# judge
# ---------------------------------------------------------------------------

JUDGE_SYSTEM_PROMPT = (
    "You are a decider that decides whether the answer is the same as the "
    "correct answer. If the output doesn't align with the correct answer, "
    "respond with '0', whereas if it's correct, then respond with '1'. "
    "DO NOT PROVIDE YOUR OWN ANSWER OR REASONING, JUST SELECT '0' OR '1'."
)

JUDGE_USER_TEMPLATE = (
    "GPT-4o Result: {result}\n"
    "Correct Answer: {gold}.\n"
    "Answer with 0 (Wrong) or 1 (Correct)."
)

_SENTENCE_END = re.compile(r"[.!?。！？]")


def last_three_sentences(text: str) -> str:
    """The closing sentences of a completion, for compact judging.

    A line that ends with a display-equation terminator (``\\]`` or ``$``)
    counts as sentence-final at its line break, so equation-heavy closings
    are not glued into one oversized sentence.
    """
    breaks: list[int] = [m.end() for m in _SENTENCE_END.finditer(text)]
    pos = 0
    for line in text.split("\n"):
        end = pos + len(line)
        stripped = line.rstrip()
        if stripped.endswith("\\]") or stripped.endswith("$"):
            breaks.append(end)
        pos = end + 1
    breaks = sorted(set(breaks))
    sentences: list[str] = []
    start = 0
    for b in breaks:
        chunk = text[start:b].strip()
        if chunk:
            sentences.append(chunk)
        start = b
    final = text[start:].strip()
    if final:
        sentences.append(final)
    return " ".join(sentences[-3:])


def build_judge_request(
    result_tail: str,
    gold_text: str,
    params: GenerationParams | None = None,
) -> CompletionRequest:
    user = JUDGE_USER_TEMPLATE.format(result=result_tail, gold=gold_text)
    return CompletionRequest(
        messages=(
            Message("system", JUDGE_SYSTEM_PROMPT),
            Message("user", user),
        ),
        params=params or GenerationParams(),
    )


def parse_verdict(text: str) -> int | None:
    cleaned = text.strip().strip("'\"`").strip().rstrip(".").strip()
    if cleaned in ("0", "1"):
        return int(cleaned)
    return None


def judge_answer(
    gateway: Gateway,
    completion_text: str,
    record: QuestionRecord,
    params: GenerationParams | None = None,
) -> int:
    """Ask the judge whether a completion's closing answer matches gold.

    Returns 1 (correct) or 0 (wrong).  One malformed verdict triggers a
    single retry with an explicit format reminder appended; a second
    failure raises InvalidVerdictError.
    """
    tail = last_three_sentences(completion_text)
    request = build_judge_request(tail, record.gold_text(), params)
    response = gateway.complete(request)
    verdict = parse_verdict(response.text)
    if verdict is not None:
        return verdict
    nudge = request.messages + (
        Message("assistant", response.text),
        Message("user", "Respond with exactly one character: 0 or 1."),
    )
    retry = gateway.complete(replace(request, messages=nudge))
    verdict = parse_verdict(retry.text)
    if verdict is None:
        raise InvalidVerdictError(retry.text)
    return verdict


# ---------------------------------------------------------------------------
# traces and run-level scoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceRecord:
    """Everything observed for one question in one run."""

    record_id: str
    dataset: str
    method: str
    steps: str
    prompt_digest: str
    response_text: str
    finish_reason: str
    model: str
    latency_ms: int
    cached: bool
    extracted: ExtractedAnswer
    gold_text: str
    correct: bool
    invalid: bool
    score_path: str
    judge_verdict: int | None = None
    symbolic_status: str | None = None
    symbolic_program: str | None = None
    solver_answer: str | None = None
    solver_agrees: bool | None = None
    error: str | None = None
    schema_version: str = TRACE_SCHEMA_VERSION

    def to_json_dict(self) -> dict[str, object]:
        # the cached flag is deliberately not serialized: a warm-cache rerun
        # must reproduce the trace file byte for byte
        return {
            "schema_version": self.schema_version,
            "record_id": self.record_id,
            "dataset": self.dataset,
            "method": self.method,
            "steps": self.steps,
            "prompt_digest": self.prompt_digest,
            "response_text": self.response_text,
            "finish_reason": self.finish_reason,
            "model": self.model,
            "latency_ms": self.latency_ms,
            "extracted": self.extracted.to_json_dict(),
            "gold_text": self.gold_text,
            "correct": self.correct,
            "invalid": self.invalid,
            "score_path": self.score_path,
            "judge_verdict": self.judge_verdict,
            "symbolic_status": self.symbolic_status,
            "symbolic_program": self.symbolic_program,
            "solver_answer": self.solver_answer,
            "solver_agrees": self.solver_agrees,
            "error": self.error,
        }

    @classmethod
    def from_json_dict(cls, payload: dict[str, object]) -> TraceRecord:
        return cls(
            record_id=str(payload["record_id"]),
            dataset=str(payload["dataset"]),
            method=str(payload["method"]),
            steps=str(payload["steps"]),
            prompt_digest=str(payload["prompt_digest"]),
            response_text=str(payload["response_text"]),
            finish_reason=str(payload["finish_reason"]),
            model=str(payload["model"]),
            latency_ms=int(payload["latency_ms"]),  # type: ignore[arg-type]
            cached=bool(payload.get("cached", False)),
            extracted=ExtractedAnswer.from_json_dict(payload["extracted"]),  # type: ignore[arg-type]
            gold_text=str(payload["gold_text"]),
            correct=bool(payload["correct"]),
            invalid=bool(payload["invalid"]),
            score_path=str(payload["score_path"]),
            judge_verdict=payload.get("judge_verdict"),  # type: ignore[arg-type]
            symbolic_status=payload.get("symbolic_status"),  # type: ignore[arg-type]
            symbolic_program=payload.get("symbolic_program"),  # type: ignore[arg-type]
            solver_answer=payload.get("solver_answer"),  # type: ignore[arg-type]
            solver_agrees=payload.get("solver_agrees"),  # type: ignore[arg-type]
            error=payload.get("error"),  # type: ignore[arg-type]
            schema_version=str(payload.get("schema_version", TRACE_SCHEMA_VERSION)),
        )


SUMMARY_CSV_HEADER = (
    "dataset",
    "method",
    "steps",
    "accuracy",
    "n",
    "invalid",
    "parse_rate",
    "template_version",
    "seed",
)


@dataclass(frozen=True)
class RunSummary:
    dataset: str
    method: str
    steps: str
    accuracy: Decimal
    n: int
    n_correct: int
    n_invalid: int
    parse_rate: Decimal | None
    template_version: str
    seed: int

    def to_csv_row(self) -> tuple[str, ...]:
        return (
            self.dataset,
            self.method,
            self.steps,
            f"{self.accuracy}",
            str(self.n),
            str(self.n_invalid),
            "" if self.parse_rate is None else f"{self.parse_rate}",
            self.template_version,
            str(self.seed),
        )

    def to_json_dict(self) -> dict[str, object]:
        return {
            "dataset": self.dataset,
            "method": self.method,
            "steps": self.steps,
            "accuracy": str(self.accuracy),
            "n": self.n,
            "n_correct": self.n_correct,
            "n_invalid": self.n_invalid,
            "parse_rate": None if self.parse_rate is None else str(self.parse_rate),
            "template_version": self.template_version,
            "seed": self.seed,
        }


def percent(numerator: int, denominator: int) -> Decimal:
    """100 * numerator / denominator, half-up at two decimals."""
    if denominator == 0:
        raise EvaluationError("percentage of an empty set")
    return round_half_up(Fraction(100 * numerator, denominator), 2)


def score_run(
    traces: list[TraceRecord],
    *,
    dataset: str,
    method: str,
    steps: str,
    template_version: str,
    seed: int,
) -> RunSummary:
    """Aggregate per-question traces into one accuracy row.

    Invalid answers count as incorrect, never as excluded.  The parse
    rate covers only traces whose method attempted symbolic conversion.
    """
    if not traces:
        raise EmptyRunError("no traces to score")
    n = len(traces)
    n_correct = sum(1 for t in traces if t.correct)
    n_invalid = sum(1 for t in traces if t.invalid)
    converting = [t for t in traces if t.symbolic_status is not None]
    parse_rate = None
    if converting:
        parsed = sum(1 for t in converting if t.symbolic_status == "parsed")
        parse_rate = percent(parsed, len(converting))
    return RunSummary(
        dataset=dataset,
        method=method,
        steps=steps,
        accuracy=percent(n_correct, n),
        n=n,
        n_correct=n_correct,
        n_invalid=n_invalid,
        parse_rate=parse_rate,
        template_version=template_version,
        seed=seed,
    )
