from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from comat import (
    ALL_STEPS,
    CallMode,
    EXECUTION_PHRASE,
    GoldAnswer,
    GoldKind,
    MATCHING_PHRASE,
    Method,
    OMISSION_GRID,
    PipelineVariant,
    QuestionRecord,
    SECTION_HEADERS,
    STEP_INSTRUCTIONS,
    Step,
    TemplateError,
    enumerate_variants,
    parse_steps,
    render_execution_prompt,
    render_prompt,
    section_structure,
    step_instructions_present,
    subset_label,
)


def mcq_record() -> QuestionRecord:
    return QuestionRecord(
        id="t1",
        stem="A hall seats 400 people. Tickets cost $12 or $8 and the gate total is $4000. How many $12 tickets sold?",
        gold=GoldAnswer(GoldKind.OPTION_LABEL, "B"),
        choices=(("A", "100"), ("B", "200"), ("C", "300")),
    )


def free_record() -> QuestionRecord:
    return QuestionRecord(
        id="t2",
        stem="A train travels 60 miles per hour for 90 minutes. How far does it go?",
        gold=GoldAnswer(GoldKind.LITERAL, "90"),
    )


# -- variant grid -------------------------------------------------------------

def test_enumerate_variants_is_the_published_sixteen():
    variants = enumerate_variants()
    assert len(variants) == 16
    assert [v.omitted_steps for v in variants] == list(OMISSION_GRID)
    assert [subset_label(s) for s in OMISSION_GRID] == [
        "1", "2", "3", "4",
        "1,2", "3,4", "1,3", "2,4", "1,4", "2,3",
        "1,2,3", "1,3,4", "1,2,4", "2,3,4",
        "1,2,3,4", "",
    ]
    assert all(v.method is Method.COMAT for v in variants)
    # all-omitted row renders without any step instruction
    cotlike = variants[14]
    assert cotlike.active_steps == frozenset()
    assert variants[15].active_steps == frozenset(ALL_STEPS)


def test_variant_validation_rules():
    with pytest.raises(ValueError):
        PipelineVariant(method=Method.COT, active_steps=frozenset({Step.S1}))
    with pytest.raises(ValueError):
        PipelineVariant(method=Method.STANDARD, call_mode=CallMode.TWO)
    v = PipelineVariant(method=Method.COMAT, active_steps=frozenset({Step.S2}))
    assert v.omitted_steps == frozenset(ALL_STEPS) - {Step.S2}


def test_parse_steps_round_trip():
    assert parse_steps("1,3") == frozenset({Step.S1, Step.S3})
    assert parse_steps("s2, s4") == frozenset({Step.S2, Step.S4})
    assert parse_steps("") == frozenset()
    assert subset_label(parse_steps("4,1")) == "1,4"
    with pytest.raises(ValueError):
        parse_steps("5")


# -- rendering ----------------------------------------------------------------

def test_full_comat_prompt_carries_all_blocks_in_order():
    bundle = render_prompt(mcq_record())
    text = bundle.user_text
    assert section_structure(text) == ("s1", "s2", "s3", "s4", "execution", "matching")
    positions = [text.index(STEP_INSTRUCTIONS[s]) for s in (Step.S1, Step.S2, Step.S3, Step.S4)]
    assert positions == sorted(positions)
    assert EXECUTION_PHRASE in text
    assert MATCHING_PHRASE in text
    assert mcq_record().stem in text
    assert "Options:" in text and "B) 200" in text


def test_ablated_render_is_byte_identical_to_block_removal():
    from comat.prompting import TEMPLATE_VERSION, _load

    record = mcq_record()
    full = render_prompt(record).user_text
    for omit in (Step.S1, Step.S2, Step.S3, Step.S4):
        active = frozenset(ALL_STEPS) - {omit}
        ablated = render_prompt(
            record, PipelineVariant(method=Method.COMAT, active_steps=active)
        ).user_text
        block = _load(TEMPLATE_VERSION, f"step_{omit.value}.txt")
        start = full.index(block)
        assert full[:start] + full[start + len(block) + len("\n\n"):] == ablated


def test_all_omitted_render_matches_cot_section_structure():
    record = mcq_record()
    empty = render_prompt(
        record, PipelineVariant(method=Method.COMAT, active_steps=frozenset())
    ).user_text
    cot = render_prompt(record, PipelineVariant(method=Method.COT)).user_text
    assert section_structure(empty) == section_structure(cot)
    assert step_instructions_present(empty) == frozenset()


def test_cot_prompt_has_phrase_but_no_step_instructions():
    text = render_prompt(free_record(), PipelineVariant(method=Method.COT)).user_text
    assert EXECUTION_PHRASE in text
    assert step_instructions_present(text) == frozenset()


def test_standard_prompt_has_neither_phrase_nor_steps():
    text = render_prompt(free_record(), PipelineVariant(method=Method.STANDARD)).user_text
    assert EXECUTION_PHRASE not in text
    assert step_instructions_present(text) == frozenset()


def test_matching_block_present_iff_choices():
    v = PipelineVariant(method=Method.COMAT)
    with_choices = render_prompt(mcq_record(), v).user_text
    without = render_prompt(free_record(), v).user_text
    assert MATCHING_PHRASE in with_choices
    assert MATCHING_PHRASE not in without
    assert SECTION_HEADERS["matching"] not in without


def test_rendering_is_pure_and_stamps_template_metadata():
    a = render_prompt(mcq_record())
    b = render_prompt(mcq_record())
    assert a == b
    assert a.template_version == "v1"
    assert a.exemplar_id == "ticket-sales"
    assert a.system_text


def test_unknown_exemplar_raises():
    with pytest.raises(TemplateError):
        render_prompt(mcq_record(), exemplar_id="no-such-example")


def test_stem_with_placeholder_braces_survives_verbatim():
    record = QuestionRecord(
        id="t3",
        stem="Compute f({{stem}}) where braces are literal text.",
        gold=GoldAnswer(GoldKind.LITERAL, "0"),
    )
    text = render_prompt(record).user_text
    assert "Compute f({{stem}}) where braces are literal text." in text


def test_two_call_first_stage_stops_at_conversion():
    v = PipelineVariant(method=Method.COMAT, call_mode=CallMode.TWO)
    text = render_prompt(mcq_record(), v).user_text
    assert step_instructions_present(text) == frozenset(ALL_STEPS)
    assert EXECUTION_PHRASE not in text


def test_render_execution_prompt_embeds_symbolic_text_verbatim():
    symbolic = "var v: rat;\nv + 3 = 10;\nfind v"
    bundle = render_execution_prompt(mcq_record(), symbolic)
    assert symbolic in bundle.user_text
    assert EXECUTION_PHRASE in bundle.user_text
    assert step_instructions_present(bundle.user_text) == frozenset()
    assert bundle == render_execution_prompt(mcq_record(), symbolic)


def test_render_execution_prompt_rejects_empty_symbolic():
    with pytest.raises(ValueError):
        render_execution_prompt(mcq_record(), "")


@settings(max_examples=120, deadline=None)
@given(
    small=st.frozensets(st.sampled_from(list(ALL_STEPS)), max_size=4),
    extra=st.frozensets(st.sampled_from(list(ALL_STEPS)), max_size=4),
)
def test_monotone_headers_property(small, extra):
    big = small | extra
    record = mcq_record()
    text_small = render_prompt(
        record, PipelineVariant(method=Method.COMAT, active_steps=small)
    ).user_text
    text_big = render_prompt(
        record, PipelineVariant(method=Method.COMAT, active_steps=big)
    ).user_text
    assert step_instructions_present(text_small) == small
    assert step_instructions_present(text_big) == big
    for step in small:
        assert STEP_INSTRUCTIONS[step] in text_big


def test_exemplars_do_not_leak_instruction_markers():
    # section counting depends on instruction phrases appearing exactly once,
    # so the shipped exemplars must not contain them
    from comat.prompting import TEMPLATE_VERSION, _exemplar_text

    for method in (Method.COMAT, Method.COT, Method.STANDARD):
        body = _exemplar_text("ticket-sales", method, TEMPLATE_VERSION)
        assert EXECUTION_PHRASE not in body
        for phrase in STEP_INSTRUCTIONS.values():
            assert phrase not in body
