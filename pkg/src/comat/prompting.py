"""Prompt construction for the three answering methods.

A prompt is assembled from version-pinned template files plus a worked
one-shot exemplar.  The comat method carries four numbered conversion
instructions; any subset of them can be dropped to form an ablated
variant while every remaining byte of the prompt stays identical.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path

from .errors import ComatError
from .records import QuestionRecord

TEMPLATE_VERSION = "v1"
DEFAULT_EXEMPLAR = "ticket-sales"

_TEMPLATE_ROOT = Path(__file__).resolve().parent / "templates"


class TemplateError(ComatError):
    """A template or exemplar file is missing or malformed."""


class Step(str, Enum):
    S1 = "s1"
    S2 = "s2"
    S3 = "s3"
    S4 = "s4"

    @property
    def number(self) -> int:
        return int(self.value[1])


ALL_STEPS: frozenset[Step] = frozenset(Step)

# Instruction phrases, one per conversion step.  These exact strings appear
# in the rendered prompt iff the step is active, so tests and analytics key
# on them.
STEP_INSTRUCTIONS: dict[Step, str] = {
    Step.S1: "Define predicates, functions, and variables",
    Step.S2: "Parse the problem into logical rules",
    Step.S3: "Write all the facts explicitly mentioned",
    Step.S4: "Parse the question into symbolic form",
}

EXECUTION_PHRASE = "Let's think step-by-step"
MATCHING_PHRASE = "the most similar one"

# Output headings the model is told to emit.  Trace segmentation keys on
# these (see analysis.segment_trace), so they are pinned here next to the
# instructions that request them.
SECTION_HEADERS: dict[str, str] = {
    "definitions": "Define predicates and functions",
    "rules": "Parse problem into logical rules",
    "facts": "Facts",
    "question": "Parse the question",
    "solution": "Solve step by step",
    "answer": "Derived answer",
    "matching": "Match to provided options",
}

SECTION_FOR_STEP: dict[Step, str] = {
    Step.S1: "definitions",
    Step.S2: "rules",
    Step.S3: "facts",
    Step.S4: "question",
}


class Method(str, Enum):
    COMAT = "comat"
    COT = "cot"
    STANDARD = "standard"


class CallMode(str, Enum):
    SINGLE = "single"
    TWO = "two"


@dataclass(frozen=True)
class PipelineVariant:
    """One configuration of the answering pipeline."""

    method: Method = Method.COMAT
    active_steps: frozenset[Step] = field(default_factory=lambda: ALL_STEPS)
    call_mode: CallMode = CallMode.SINGLE

    def __post_init__(self) -> None:
        object.__setattr__(self, "active_steps", frozenset(self.active_steps))
        if self.method is not Method.COMAT:
            if self.active_steps != ALL_STEPS:
                raise ValueError("step ablation applies to the comat method only")
            if self.call_mode is not CallMode.SINGLE:
                raise ValueError("two-call mode applies to the comat method only")

    @property
    def omitted_steps(self) -> frozenset[Step]:
        return ALL_STEPS - self.active_steps

    def label(self) -> str:
        if self.method is not Method.COMAT:
            return self.method.value
        if self.active_steps == ALL_STEPS:
            return "comat"
        kept = ",".join(s.value for s in sorted(self.active_steps, key=lambda s: s.number))
        return f"comat[{kept or 'none'}]"


@dataclass(frozen=True)
class PromptBundle:
    """A fully rendered request: system text plus user text."""

    system_text: str
    user_text: str
    exemplar_id: str
    template_version: str = TEMPLATE_VERSION


# ---------------------------------------------------------------------------
# step-subset helpers
# ---------------------------------------------------------------------------

def parse_steps(text: str) -> frozenset[Step]:
    """Parse a subset description like ``"1,3"`` or ``"s1,s3"``.

    An empty string means the empty subset.
    """
    out: set[Step] = set()
    for chunk in text.split(","):
        chunk = chunk.strip().lower()
        if not chunk:
            continue
        name = chunk if chunk.startswith("s") else f"s{chunk}"
        try:
            out.add(Step(name))
        except ValueError:
            raise ValueError(f"unknown step {chunk!r}; expected 1-4") from None
    return frozenset(out)


def subset_label(steps: frozenset[Step]) -> str:
    """Canonical comma label for a step subset; empty subset renders as ''."""
    return ",".join(str(s.number) for s in sorted(steps, key=lambda s: s.number))


# Omitted-step subsets in the fixed reporting order: singletons, pairs,
# triples, the full set, and finally the empty omission (= full comat).
OMISSION_GRID: tuple[frozenset[Step], ...] = tuple(
    parse_steps(t)
    for t in (
        "1", "2", "3", "4",
        "1,2", "3,4", "1,3", "2,4", "1,4", "2,3",
        "1,2,3", "1,3,4", "1,2,4", "2,3,4",
        "1,2,3,4",
        "",
    )
)


def enumerate_variants(call_mode: CallMode = CallMode.SINGLE) -> tuple[PipelineVariant, ...]:
    """All sixteen comat step ablations, in reporting order."""
    return tuple(
        PipelineVariant(method=Method.COMAT, active_steps=ALL_STEPS - omitted, call_mode=call_mode)
        for omitted in OMISSION_GRID
    )


# ---------------------------------------------------------------------------
# template loading and substitution
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _load(version: str, name: str) -> str:
    path = _TEMPLATE_ROOT / version / name
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise TemplateError(f"missing template file: {path}") from None
    # one trailing newline is an artifact of the file format, not the prompt
    return text[:-1] if text.endswith("\n") else text


def list_exemplars(version: str = TEMPLATE_VERSION) -> tuple[str, ...]:
    root = _TEMPLATE_ROOT / version / "exemplars"
    ids = {p.name.rsplit(".", 2)[0] for p in root.glob("*.txt")}
    return tuple(sorted(ids))


_PLACEHOLDER = re.compile(r"\{\{(exemplar|blocks|stem|choices|symbolic)\}\}")


def _substitute(template: str, values: dict[str, str]) -> str:
    # single pass: replacement text is never rescanned, so a question stem
    # containing "{{...}}" survives verbatim
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


def _choices_block(record: QuestionRecord) -> str:
    if not record.is_mcq:
        return ""
    lines = "\n".join(f"{label}) {text}" for label, text in record.choices or ())
    return f"\nOptions:\n{lines}"


def _exemplar_text(exemplar_id: str, method: Method, version: str) -> str:
    name = f"exemplars/{exemplar_id}.{method.value}.txt"
    path = _TEMPLATE_ROOT / version / name
    if not path.is_file():
        raise TemplateError(
            f"no exemplar {exemplar_id!r} for method {method.value!r} in {version}"
        )
    return _load(version, name)


def _instruction_blocks(active: frozenset[Step], include_matching: bool) -> str:
    """Join the active step blocks plus execution (and matching) blocks.

    Step numbering is fixed at 1-4 regardless of omissions, so dropping a
    step removes exactly that block and one separator and nothing else.
    """
    parts = [
        _load(TEMPLATE_VERSION, f"step_{s.value}.txt")
        for s in sorted(active, key=lambda s: s.number)
    ]
    execution = _load(TEMPLATE_VERSION, "execution.txt")
    if include_matching:
        execution = execution + " " + _load(TEMPLATE_VERSION, "matching.txt")
    parts.append(execution)
    return "\n\n".join(parts)


def render_prompt(
    record: QuestionRecord,
    variant: PipelineVariant | None = None,
    *,
    exemplar_id: str = DEFAULT_EXEMPLAR,
) -> PromptBundle:
    """Render the (system, user) pair for one question under one variant.

    For two-call comat this renders the first call: conversion only,
    no execution request.
    """
    variant = variant or PipelineVariant()
    version = TEMPLATE_VERSION
    system_text = _load(version, "system.txt")
    exemplar = _exemplar_text(exemplar_id, variant.method, version)
    values = {
        "exemplar": exemplar,
        "stem": record.stem,
        "choices": _choices_block(record),
        "blocks": "",
        "symbolic": "",
    }

    if variant.method is Method.STANDARD:
        template = _load(version, "standard.txt")
    elif variant.method is Method.COT:
        template = _load(version, "cot.txt")
        values["blocks"] = _instruction_blocks(frozenset(), record.is_mcq)
    elif variant.call_mode is CallMode.TWO:
        template = _load(version, "two_call_conversion.txt")
        values["blocks"] = "\n\n".join(
            _load(version, f"step_{s.value}.txt")
            for s in sorted(variant.active_steps, key=lambda s: s.number)
        )
    else:
        template = _load(version, "comat.txt")
        values["blocks"] = _instruction_blocks(variant.active_steps, record.is_mcq)

    return PromptBundle(
        system_text=system_text,
        user_text=_substitute(template, values),
        exemplar_id=exemplar_id,
    )


def render_execution_prompt(record: QuestionRecord, symbolic_text: str) -> PromptBundle:
    """Render the second call of two-call comat.

    The symbolic representation produced by the first call is embedded
    verbatim; the model is asked only to execute it.
    """
    if not symbolic_text.strip():
        raise ValueError("symbolic_text must be non-empty")
    version = TEMPLATE_VERSION
    values = {
        "exemplar": "",
        "stem": record.stem,
        "choices": _choices_block(record),
        "blocks": _instruction_blocks(frozenset(), record.is_mcq),
        "symbolic": symbolic_text.strip(),
    }
    template = _load(version, "execution_call.txt")
    return PromptBundle(
        system_text=_load(version, "system.txt"),
        user_text=_substitute(template, values),
        exemplar_id="",
    )


# ---------------------------------------------------------------------------
# structural inspection
# ---------------------------------------------------------------------------

_MARKERS: tuple[tuple[str, str], ...] = (
    ("s1", STEP_INSTRUCTIONS[Step.S1]),
    ("s2", STEP_INSTRUCTIONS[Step.S2]),
    ("s3", STEP_INSTRUCTIONS[Step.S3]),
    ("s4", STEP_INSTRUCTIONS[Step.S4]),
    ("execution", EXECUTION_PHRASE),
    ("matching", MATCHING_PHRASE),
)


def section_structure(text: str) -> tuple[str, ...]:
    """Ordered marker keys present in a rendered prompt.

    Every occurrence of every marker phrase is reported, in byte order.
    """
    hits: list[tuple[int, str]] = []
    for key, phrase in _MARKERS:
        start = 0
        while True:
            idx = text.find(phrase, start)
            if idx < 0:
                break
            hits.append((idx, key))
            start = idx + 1
    hits.sort()
    return tuple(key for _, key in hits)


def step_instructions_present(text: str) -> frozenset[Step]:
    """Which step instruction phrases occur in the text."""
    return frozenset(s for s in Step if STEP_INSTRUCTIONS[s] in text)
