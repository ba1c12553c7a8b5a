"""Regenerate the checked-in fixtures from first principles.

Run from the repo root:  python3 tools/make_fixtures.py
Everything written here is deterministic; reruns are byte-identical.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from comat import (
    JUDGE_SYSTEM_PROMPT,
    GenerationParams,
    build_judge_request,
)

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "fixtures"

# Published ablation grid: accuracy per omitted-step subset, two source
# datasets plus their reported two-decimal average column.
ABLATION_ROWS = [
    # omitted, aqua, gaokao, average
    ("1", "81.89", "59.18", "70.54"),
    ("2", "80.71", "71.43", "76.07"),
    ("3", "82.28", "67.35", "74.82"),
    ("4", "83.04", "61.22", "72.13"),
    ("1,2", "82.68", "67.35", "75.02"),
    ("3,4", "84.25", "67.35", "75.80"),
    ("1,3", "83.07", "69.39", "76.23"),
    ("2,4", "84.25", "69.39", "76.82"),
    ("1,4", "82.28", "65.31", "73.80"),
    ("2,3", "83.86", "55.10", "69.48"),
    ("1,2,3", "81.89", "55.10", "68.50"),
    ("1,3,4", "83.07", "71.43", "77.25"),
    ("1,2,4", "81.10", "73.47", "77.29"),
    ("2,3,4", "81.50", "61.22", "71.36"),
    ("1,2,3,4", "84.25", "63.27", "73.76"),
    ("", "83.46", "71.43", "77.45"),
]

# Option-swapping robustness runs: variant 0 is the unperturbed baseline,
# variants 1-3 are reshuffled-choice reruns.
ROBUSTNESS_ROWS = [
    ("aqua", "comat", ["83.46", "83.07", "83.07", "81.49"]),
    ("aqua", "cot", ["84.25", "73.23", "66.54", "68.11"]),
    ("aqua", "standard", ["44.49", "44.49", "42.91", "40.16"]),
    ("mmlu-redux", "comat", ["88.30", "86.94", "84.36", "83.86"]),
    ("mmlu-redux", "cot", ["88.10", "86.57", "83.61", "83.10"]),
    ("mmlu-redux", "standard", ["59.70", "58.79", "61.14", "61.09"]),
]


def write_ablation_csv() -> None:
    with open(FIX / "ablation_missing_steps.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["subset", "dataset", "accuracy"])
        for omitted, aqua, gaokao, average in ABLATION_ROWS:
            w.writerow([omitted, "aqua", aqua])
            w.writerow([omitted, "gaokao", gaokao])
            w.writerow([omitted, "average", average])


def write_robustness_csv() -> None:
    with open(FIX / "option_swapping_runs.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "method", "variant", "accuracy"])
        for dataset, method, values in ROBUSTNESS_ROWS:
            for variant, acc in enumerate(values):
                w.writerow([dataset, method, str(variant), acc])


def write_judge_goldens() -> None:
    (FIX / "judge_system_prompt.txt").write_bytes(JUDGE_SYSTEM_PROMPT.encode("utf-8"))
    tail = (
        "Overtime pays 1.2 times the regular rate. "
        "She worked 45 hours this week. "
        "Her total earnings are $460."
    )
    request = build_judge_request(
        tail, "460", GenerationParams(model="gpt-4o-mini", temperature=0.0, max_tokens=3500)
    )
    payload = json.dumps(request.to_json_dict(), sort_keys=True, ensure_ascii=False, indent=2)
    (FIX / "judge_request.golden.json").write_text(payload + "\n", encoding="utf-8")


def write_tickets_sym() -> None:
    program = """\
# Two ticket tiers, a sold-out venue, and a known total revenue.
var v: int;
var r: int;
const T = 50000;
const Pv = 250;
const Pr = 100;
const R = 6500000;
v + r = T;
Pv*v + Pr*r = R;
v >= 0;
r >= 0;
find v
"""
    (FIX / "symbolic" / "tickets.sym").write_text(program, encoding="utf-8")


GOLDEN_EXAMPLES = [
    {
        "example": "ex1_driving",
        "format": "gsm8k",
        "row": {
            "id": "ex1-driving",
            "question": (
                "John drives for 3 hours at a speed of 60 mph and then turns around "
                "because he realizes he forgot something very important at home. He "
                "tries to get home in 4 hours but spends the first 2 hours in "
                "standstill traffic. He spends the next half-hour driving at a speed "
                "of 30 mph, before being able to drive the remaining time of the 4 "
                "hours going at 80 mph. How far is he from home at the end of those "
                "4 hours?"
            ),
            "answer": "He is 180 - 135 = 45 miles from home. #### 45",
        },
        "verdicts": {"comat": True, "cot": False},
    },
    {
        "example": "ex2_overtime",
        "format": "gsm8k",
        "row": {
            "id": "ex2-overtime",
            "question": (
                "Eliza's rate per hour for the first 40 hours she works each week is "
                "$10. She also receives an overtime pay of 1.2 times her regular "
                "hourly rate. If Eliza worked for 45 hours this week, how much are "
                "her earnings for this week?"
            ),
            "answer": "400 + 60 = 460 #### 460",
        },
        "verdicts": {"comat": True, "cot": True},
    },
    {
        "example": "ex3_pens",
        "format": "gsm8k",
        "row": {
            "id": "ex3-pens",
            "question": (
                "Ram uses a lot of pens. He discovered that he can save money by "
                "mixing the ink from five empty pens to make one full pen. If he "
                "buys 25 pens and then uses them to make new pens when the ink runs "
                "low, how many total pens does he get to have?"
            ),
            "answer": "25 + 5 + 1 = 31 #### 31",
        },
        "verdicts": {"comat": True, "cot": False},
    },
    {
        "example": "ex4_unit_rate",
        "format": "aqua",
        "row": {
            "id": "ex4-unit-rate",
            "question": (
                "Solve \\( \\frac{18.5 \\text{ dol}}{m \\text{ gal}} = "
                "\\frac{3.60 \\text{ dol}}{7.5 \\text{ gal}} \\). Round to the "
                "nearest hundredth if necessary."
            ),
            "options": ["A) 0.48", "B) 4.94", "C) 18.50", "D) 38.54", "E) 74.04"],
            "correct": "D",
        },
        "verdicts": {"comat": False, "cot": True},
    },
    {
        "example": "ex5_salary",
        "format": "gsm8k",
        "row": {
            "id": "ex5-salary",
            "question": (
                "A company pays each of its employees $600 in a month. The company "
                "has a policy of increasing the salaries of each of its employees by "
                "10% of the initial salary every year for those who've stayed in the "
                "company for five years. If Sylvie just clocked 5 years in the "
                "company last December, what's her annual salary after three more "
                "years of service?"
            ),
            "answer": "7200 + 3 * 720 = 9360 #### 9360",
        },
        "verdicts": {"comat": False, "cot": False},
    },
]


def write_golden_manifest() -> None:
    lines = [json.dumps(e, sort_keys=True, ensure_ascii=False) for e in GOLDEN_EXAMPLES]
    (FIX / "golden_traces" / "manifest.jsonl").write_text(
        "\n".join(lines) + "\n", encoding="utf-8"
    )


def write_golden3_dataset() -> None:
    rows = [e["row"] for e in GOLDEN_EXAMPLES if e["format"] == "gsm8k"][:3]
    lines = [json.dumps(r, sort_keys=True, ensure_ascii=False) for r in rows]
    (FIX / "datasets" / "golden3.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _mini_mcq_items() -> list[dict]:
    """Twenty sold-out-venue questions with one unique capacity each."""
    items = []
    for i in range(20):
        capacity = 11000 + 1000 * i
        vip_price = (30, 40, 50, 25)[i % 4]
        reg_price = (10, 15, 20)[i % 3]
        vip_sold = 1000 + 250 * i
        revenue = vip_price * vip_sold + reg_price * (capacity - vip_sold)
        offsets = (-500, -250, 0, 250, 500)
        gold_pos = i % 5
        values = [vip_sold + offsets[(j - gold_pos) % 5] for j in range(5)]
        values[gold_pos] = vip_sold
        labels = ["A", "B", "C", "D", "E"]
        items.append(
            {
                "id": f"venue-{i:02d}",
                "question": (
                    f"A stadium holds {capacity} fans. VIP tickets cost "
                    f"${vip_price} each and regular tickets cost ${reg_price} each. "
                    f"Every ticket is sold and the total revenue is ${revenue}. "
                    f"How many VIP tickets were sold?"
                ),
                "options": [f"{labels[j]}) {values[j]}" for j in range(5)],
                "correct": labels[gold_pos],
                "_meta": {
                    "capacity": capacity,
                    "vip_price": vip_price,
                    "reg_price": reg_price,
                    "revenue": revenue,
                    "vip_sold": vip_sold,
                    "gold_label": labels[gold_pos],
                },
            }
        )
    return items


def _mock_completion(meta: dict, final_answer: str) -> str:
    t, pv, pr = meta["capacity"], meta["vip_price"], meta["reg_price"]
    rev, v = meta["revenue"], meta["vip_sold"]
    r = t - v
    return (
        "**Define predicates and functions:**\n"
        "- $v$: number of VIP tickets sold\n"
        "- $r$: number of regular tickets sold\n"
        "- $T$: venue capacity; $Pv$, $Pr$: ticket prices; $R$: total revenue\n"
        "\n"
        "**Parse problem into logical rules:**\n"
        "- $v + r = T$\n"
        "- $Pv*v + Pr*r = R$\n"
        "\n"
        "**Facts:**\n"
        f"- $T = {t}$\n"
        f"- $Pv = {pv}$\n"
        f"- $Pr = {pr}$\n"
        f"- $R = {rev}$\n"
        "\n"
        "**Parse the question:**\n"
        "- Find $v$\n"
        "\n"
        "**Solve step by step:**\n"
        f"Substituting $r = T - v$ gives $Pv*v + Pr*(T - v) = R$, so "
        f"${pv - pr}v = {rev} - {pr * t}$ and $v = {v}$, $r = {r}$.\n"
        "\n"
        "**Derived answer:**\n"
        f"$v = {v}$\n"
        "\n"
        "**Match to provided options:**\n"
        f"The closest option is {meta['gold_label']}) {v}.\n"
        "\n"
        f"Final Answer: {final_answer}"
    )


def write_aqua_mini() -> None:
    items = _mini_mcq_items()
    data_lines = []
    script_lines = []
    wrong = {7, 13}
    empty = {19}
    for i, item in enumerate(items):
        meta = item.pop("_meta")
        data_lines.append(json.dumps(item, sort_keys=True, ensure_ascii=False))
        if i in empty:
            response: dict = {"text": ""}
        elif i in wrong:
            response = {"text": _mock_completion(meta, str(meta["vip_sold"] + 250))}
        elif i % 2 == 0:
            response = {"text": _mock_completion(meta, str(meta["vip_sold"]))}
        else:
            response = {"text": _mock_completion(meta, meta["gold_label"])}
        script_lines.append(
            json.dumps(
                {
                    "match": {"substring": f"holds {meta['capacity']} fans"},
                    "response": response,
                },
                sort_keys=True,
                ensure_ascii=False,
            )
        )
    (FIX / "datasets" / "aqua_mini.jsonl").write_text("\n".join(data_lines) + "\n", encoding="utf-8")
    (FIX / "mock_scripts" / "aqua_mini.jsonl").write_text(
        "\n".join(script_lines) + "\n", encoding="utf-8"
    )


def write_golden3_script() -> None:
    entries = [
        {
            "match": {"substring": "John drives for 3 hours"},
            "response": {"text": "He drove 180 miles out and covered 135 on the way back.\n\nFinal Answer: 45"},
        },
        {
            "match": {"substring": "Eliza's rate per hour"},
            "response": {"text": "Regular pay is $400 and overtime adds $60.\n\nFinal Answer: 460"},
        },
        {
            "match": {"substring": "Ram uses a lot of pens"},
            "response": {"text": "25 bought plus 5 remade gives 30.\n\nFinal Answer: 30"},
        },
    ]
    lines = [json.dumps(e, sort_keys=True, ensure_ascii=False) for e in entries]
    (FIX / "mock_scripts" / "golden3.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_misc_minis() -> None:
    gsm8k = [
        {"id": "g1", "question": "Ava reads 12 pages a day. How many pages does she read in 7 days?", "answer": "12 * 7 = 84 #### 84"},
        {"id": "g2", "question": "A crate holds 36 apples. How many apples are in 5 crates?", "answer": "36 * 5 = 180 #### 180"},
        {"id": "g3", "question": "Tom had $50 and spent $18. How much is left?", "answer": "50 - 18 = 32 #### 32"},
        {"id": "g4", "question": "A rope 91 m long is cut into 7 equal parts. How long is each part?", "answer": "91 / 7 = 13 #### 13"},
        {"id": "g5", "question": "Nina saves $15 a week. How much does she save in 6 weeks?", "answer": "15 * 6 = 90 #### 90"},
    ]
    mmlu = [
        {"id": "m1", "question": "What is the derivative of x^2?", "choices": ["x", "2x", "x^2", "2"], "answer": 1},
        {"id": "m2", "question": "What is 7 factorial divided by 6 factorial?", "choices": ["6", "7", "42", "1"], "answer": 1},
        {"id": "m3", "question": "How many edges does a cube have?", "choices": ["8", "10", "12", "6"], "answer": 2},
        {"id": "m4", "question": "What is the least prime greater than 10?", "choices": ["11", "12", "13", "15"], "answer": 0},
    ]
    gaokao = [
        {"id": "k1", "question": "设集合 A = {1, 2, 3}，B = {2, 3, 4}，则 A ∩ B 的元素个数是多少？", "options": ["A. 1", "B. 2", "C. 3", "D. 4"], "answer": "B"},
        {"id": "k2", "question": "若 2x + 3 = 11，则 x 等于多少？", "options": ["A. 3", "B. 4", "C. 5", "D. 6"], "answer": "B"},
        {"id": "k3", "question": "一个等差数列首项为 2，公差为 3，第 5 项是多少？", "options": ["A. 11", "B. 14", "C. 17", "D. 20"], "answer": "B"},
    ]
    olympiad = [
        {"id": "o1", "question": "Find the sum of the first 100 positive integers.", "final_answer": ["5050"]},
        {"id": "o2", "question": "Compute the number of positive divisors of 360.", "final_answer": ["24"]},
        {"id": "o3", "question": "What is the remainder when 2^10 is divided by 1000?", "final_answer": ["24"]},
    ]
    mgsm = [
        {"id": "s1", "question": "Un tren recorre 60 km por hora durante 3 horas. ¿Cuántos km recorre?", "answer_number": 180},
        {"id": "s2", "question": "Hay 4 cajas con 25 naranjas cada una. ¿Cuántas naranjas hay en total?", "answer_number": 100.0},
        {"id": "s3", "question": "María tiene 12 años y su hermano el doble. ¿Cuántos años tiene su hermano?", "answer_number": 24},
    ]
    for name, rows in [
        ("gsm8k_mini.jsonl", gsm8k),
        ("mmlu_redux_mini.jsonl", mmlu),
        ("gaokao_mini.jsonl", gaokao),
        ("olympiad_mini.jsonl", olympiad),
        ("mgsm_mini.jsonl", mgsm),
    ]:
        lines = [json.dumps(r, sort_keys=True, ensure_ascii=False) for r in rows]
        (FIX / "datasets" / name).write_text("\n".join(lines) + "\n", encoding="utf-8")


def main() -> None:
    (FIX / "symbolic").mkdir(parents=True, exist_ok=True)
    (FIX / "golden_traces").mkdir(parents=True, exist_ok=True)
    (FIX / "datasets").mkdir(parents=True, exist_ok=True)
    (FIX / "mock_scripts").mkdir(parents=True, exist_ok=True)
    write_ablation_csv()
    write_robustness_csv()
    write_judge_goldens()
    write_tickets_sym()
    write_golden_manifest()
    write_golden3_dataset()
    write_aqua_mini()
    write_golden3_script()
    write_misc_minis()
    print("fixtures written under", FIX)


if __name__ == "__main__":
    main()
