from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from comat import (
    DistractorPolicy,
    GoldAnswer,
    GoldKind,
    PerturbationPlan,
    QuestionRecord,
    ValidationError,
    build_sibling_pool,
    canon,
    expand_perturbation_suite,
    load_dataset,
    parse_record,
    perturbed_to_json_dict,
    swap_options,
)
from comat.records import UnsupportedRecordError
from pathlib import Path

DATASETS = Path(__file__).resolve().parent.parent / "fixtures" / "datasets"


def mcq(rid: str = "q1", gold: str = "B", texts: tuple[str, ...] = ("10", "20", "30")) -> QuestionRecord:
    labels = "ABCDEFGHIJ"
    return QuestionRecord(
        id=rid,
        stem="How many?",
        gold=GoldAnswer(GoldKind.OPTION_LABEL, gold),
        choices=tuple((labels[i], t) for i, t in enumerate(texts)),
    )


# -- loaders ----------------------------------------------------------------

@pytest.mark.parametrize(
    "name,fmt,count",
    [
        ("golden3.jsonl", "gsm8k", 3),
        ("aqua_mini.jsonl", "aqua", 20),
        ("gsm8k_mini.jsonl", "gsm8k", 5),
        ("mmlu_redux_mini.jsonl", "mmlu-redux", 4),
        ("gaokao_mini.jsonl", "gaokao-mcq", 3),
        ("olympiad_mini.jsonl", "olympiadbench", 3),
        ("mgsm_mini.jsonl", "mgsm", 3),
    ],
)
def test_load_dataset_fixture_files(name, fmt, count):
    records, errors = load_dataset(DATASETS / name, fmt)
    assert errors == []
    assert len(records) == count
    for rec in records:
        assert rec.stem
        assert rec.gold_text()


def test_load_dataset_respects_limit():
    records, errors = load_dataset(DATASETS / "aqua_mini.jsonl", "aqua", limit=4)
    assert len(records) == 4 and not errors


def test_load_dataset_collects_row_errors_without_raising(tmp_path):
    path = tmp_path / "bad.jsonl"
    rows = [
        json.dumps({"id": "ok1", "question": "1+1?", "answer": "2 #### 2"}),
        "{not json",
        json.dumps({"id": "noanswer", "question": "?"}),
    ]
    path.write_text("\n".join(rows) + "\n")
    records, errors = load_dataset(path, "gsm8k")
    assert [r.id for r in records] == ["ok1"]
    assert sorted(lineno for lineno, _ in errors) == [2, 3]


def test_parse_record_aqua_strips_option_labels():
    row = {"question": "pick", "options": ["A) 1", "B)2", "C. 3", "D ] 4", "17"], "correct": "C"}
    rec = parse_record(json.dumps(row), "aqua", default_id="x")
    assert rec.choices == (("A", "1"), ("B", "2"), ("C", "3"), ("D", "4"), ("E", "17"))
    assert rec.gold_choice() == ("C", "3")


def test_parse_record_mmlu_redux_indexes_answer():
    row = {"question": "q", "choices": ["w", "x", "y"], "answer": 2}
    rec = parse_record(json.dumps(row), "mmlu-redux", default_id="m")
    assert rec.gold_choice() == ("C", "y")


def test_parse_record_mgsm_integral_float_normalizes():
    rec = parse_record(json.dumps({"question": "q", "answer_number": 100.0}), "mgsm", default_id="s")
    assert rec.gold.value == "100"


def test_gsm8k_requires_final_value_delimiter():
    with pytest.raises(ValidationError):
        parse_record(json.dumps({"question": "q", "answer": "just prose"}), "gsm8k", default_id="g")


def test_record_rejects_gold_label_not_among_options():
    with pytest.raises(ValidationError):
        mcq(gold="Z")


def test_record_rejects_duplicate_labels():
    with pytest.raises(ValidationError):
        QuestionRecord(
            id="d", stem="s",
            gold=GoldAnswer(GoldKind.OPTION_LABEL, "A"),
            choices=(("A", "1"), ("A", "2")),
        )


# -- option swapping ---------------------------------------------------------

def borrow_plan(**kw) -> PerturbationPlan:
    defaults = dict(
        variant_count=3,
        repeats_per_variant=2,
        seed=11,
        sibling_pool=("512", "larch", "7.25"),
    )
    defaults.update(kw)
    return PerturbationPlan(**defaults)


def test_swap_options_preserves_gold_text_and_adds_one_choice():
    rec = mcq()
    swapped = swap_options(rec, borrow_plan(), 0)
    assert len(swapped.choices) == len(rec.choices) + 1
    assert canon(swapped.gold_text()) == canon(rec.gold_text())
    texts = [canon(t) for _, t in swapped.choices]
    assert len(set(texts)) == len(texts)


def test_swap_options_is_deterministic_and_seed_sensitive():
    rec = mcq()
    a = swap_options(rec, borrow_plan(), 1)
    b = swap_options(rec, borrow_plan(), 1)
    assert a == b
    c = swap_options(rec, borrow_plan(seed=12), 1)
    # a different seed is allowed to coincide, but not for every variant
    d = [swap_options(rec, borrow_plan(seed=12), i) for i in range(3)]
    e = [swap_options(rec, borrow_plan(), i) for i in range(3)]
    assert c == d[1]
    assert d != e


def test_swap_options_never_mutates_input():
    rec = mcq()
    before = rec.choices
    swap_options(rec, borrow_plan(), 0)
    assert rec.choices == before


def test_swap_options_rejects_free_answer_records():
    rec = QuestionRecord(id="f", stem="s", gold=GoldAnswer(GoldKind.LITERAL, "4"))
    with pytest.raises(UnsupportedRecordError):
        swap_options(rec, borrow_plan(), 0)


def test_swap_options_variant_index_bounds():
    with pytest.raises(ValueError):
        swap_options(mcq(), borrow_plan(), 3)


def test_synthetic_numeric_distractor_matches_format():
    rec = mcq(texts=("1,000", "2,500", "4.75"))
    plan = PerturbationPlan(
        variant_count=1, repeats_per_variant=1, seed=3,
        distractor_policy=DistractorPolicy.SYNTHETIC_NUMERIC,
    )
    swapped = swap_options(rec, plan, 0)
    new = [t for _, t in swapped.choices if canon(t) not in {canon(x) for _, x in rec.choices}]
    assert len(new) == 1


def test_expand_perturbation_suite_shares_record_across_repeats():
    rec = mcq()
    plan = borrow_plan()
    suite = expand_perturbation_suite(rec, plan)
    assert len(suite) == plan.variant_count * plan.repeats_per_variant
    by_variant: dict[int, list[QuestionRecord]] = {}
    for vi, ri, swapped in suite:
        by_variant.setdefault(vi, []).append(swapped)
    for group in by_variant.values():
        assert all(g == group[0] for g in group)
    # single-cell plan equals a direct variant-0 swap
    tiny = borrow_plan(variant_count=1, repeats_per_variant=1)
    assert expand_perturbation_suite(rec, tiny) == [(0, 0, swap_options(rec, tiny, 0))]


def test_build_sibling_pool_excludes_own_record():
    records, _ = load_dataset(DATASETS / "aqua_mini.jsonl", "aqua")
    pool = build_sibling_pool(records, exclude_id=records[0].id)
    assert len(pool) == sum(len(r.choices) for r in records[1:])
    full = build_sibling_pool(records)
    assert len(full) == len(pool) + len(records[0].choices)


def test_perturbed_to_json_dict_round_trips_as_mcq_row():
    rec = mcq()
    plan = borrow_plan()
    swapped = swap_options(rec, plan, 2)
    row = perturbed_to_json_dict(swapped, plan, 2, 1)
    assert row["variant_index"] == 2 and row["repeat_index"] == 1
    assert row["seed"] == plan.seed
    reparsed = parse_record(json.dumps({k: v for k, v in row.items()
                                        if k in ("id", "question", "options", "correct")}), "aqua")
    assert canon(reparsed.gold_text()) == canon(rec.gold_text())


@settings(max_examples=200, deadline=None)
@given(
    n_choices=st.integers(min_value=2, max_value=8),
    gold_idx=st.integers(min_value=0, max_value=7),
    seed=st.integers(min_value=0, max_value=2**32),
    variant=st.integers(min_value=0, max_value=4),
    data=st.data(),
)
def test_swap_options_property(n_choices, gold_idx, seed, variant, data):
    gold_idx %= n_choices
    values = data.draw(
        st.lists(st.integers(min_value=0, max_value=10**6), min_size=n_choices,
                 max_size=n_choices, unique=True)
    )
    rec = mcq(gold="ABCDEFGH"[gold_idx], texts=tuple(str(v) for v in values))
    plan = PerturbationPlan(
        variant_count=5, repeats_per_variant=1, seed=seed,
        sibling_pool=(f"pool-{seed % 97}", "pool-x", "pool-y"),
    )
    swapped = swap_options(rec, plan, variant)
    assert canon(swapped.gold_text()) == canon(rec.gold_text())
    assert len(swapped.choices) == n_choices + 1
    texts = [canon(t) for _, t in swapped.choices]
    assert len(set(texts)) == len(texts)
    assert swapped == swap_options(rec, plan, variant)


def test_derive_rng_is_stable_across_processes():
    # frozen seed derivation: a changed hash scheme would silently reshuffle
    # every published perturbation, so pin one draw
    rec = mcq()
    plan = borrow_plan(seed=0)
    swapped = swap_options(rec, plan, 0)
    rng = random.Random(0)  # unrelated stream; swap must not consult global RNG
    state = rng.getstate()
    swap_options(rec, plan, 0)
    assert rng.getstate() == state
    assert swapped == swap_options(rec, plan, 0)
