"""Render run artifacts into a Markdown report plus machine-readable CSVs.

Output is byte-deterministic for equal inputs: no timestamps, no
environment probes, stable ordering everywhere.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .analysis import RobustnessSummary, StepLengthProfile
from .attribution import AttributionResult, PerformanceTable, subset_label
from .evaluation import SUMMARY_CSV_HEADER, RunSummary
from .normalize import round_half_up
from .prompting import OMISSION_GRID


@dataclass(frozen=True)
class ReportInputs:
    """Everything a report can show; any piece may be absent."""

    seed: int = 0
    summaries: tuple[RunSummary, ...] = ()
    ablation: PerformanceTable | None = None
    attribution: AttributionResult | None = None
    robustness: tuple[RobustnessSummary, ...] = ()
    profiles: tuple[tuple[str, StepLengthProfile], ...] = ()


def _write_csv(path: Path, rows: list[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)  # RFC 4180 line endings
        writer.writerows(rows)


def _md_table(header: list[str], rows: list[list[str]]) -> str:
    lines = [
        "| " + " | ".join(header) + " |",
        "| " + " | ".join("---" for _ in header) + " |",
    ]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)


def _accuracy_rows(summaries: tuple[RunSummary, ...]) -> list[list[str]]:
    rows = [list(SUMMARY_CSV_HEADER)]
    for s in sorted(summaries, key=lambda s: (s.dataset, s.method, s.steps)):
        rows.append(list(s.to_csv_row()))
    return rows


def _ablation_rows(table: PerformanceTable) -> list[list[str]]:
    datasets = list(table.datasets())
    rows = [["omitted_steps", *datasets]]
    for omitted in OMISSION_GRID:
        row = [subset_label(omitted) or "none"]
        for ds in datasets:
            try:
                row.append(str(round_half_up(table.value(omitted, ds), 2)))
            except Exception:
                row.append("")
        rows.append(row)
    return rows


def _robustness_rows(robustness: tuple[RobustnessSummary, ...]) -> list[list[str]]:
    rows = [["dataset", "method", "n_variants", "mean", "stdev", "baseline", "delta"]]
    for r in robustness:
        delta = r.delta_vs_baseline
        rows.append(
            [
                r.dataset,
                r.method,
                str(len(r.variant_accuracies)),
                str(r.display_mean()),
                str(r.display_stdev()),
                "" if r.baseline_accuracy is None else str(round_half_up(r.baseline_accuracy, 2)),
                "" if delta is None else str(round_half_up(delta, 2)),
            ]
        )
    return rows


def _profile_rows(profiles: tuple[tuple[str, StepLengthProfile], ...]) -> list[list[str]]:
    rows = [StepLengthProfile.csv_header()]
    for trace_id, profile in profiles:
        rows.append(profile.to_csv_row(trace_id))
    return rows


def emit_report(out_dir: str | Path, inputs: ReportInputs) -> Path:
    """Write report.md and tables/*.csv under out_dir; returns report path."""
    out = Path(out_dir)
    tables = out / "tables"
    tables.mkdir(parents=True, exist_ok=True)

    chunks: list[str] = ["# Run report", "", f"Seed: {inputs.seed}", ""]

    chunks.append("## Accuracy")
    chunks.append("")
    if inputs.summaries:
        rows = _accuracy_rows(inputs.summaries)
        _write_csv(tables / "accuracy.csv", rows)
        chunks.append(_md_table(rows[0], rows[1:]))
    else:
        chunks.append("No data.")
    chunks.append("")

    chunks.append("## Step ablation")
    chunks.append("")
    if inputs.ablation is not None and inputs.ablation.datasets():
        rows = _ablation_rows(inputs.ablation)
        _write_csv(tables / "ablation.csv", rows)
        chunks.append(_md_table(rows[0], rows[1:]))
    else:
        chunks.append("No data.")
    chunks.append("")

    chunks.append("## Step attribution")
    chunks.append("")
    if inputs.attribution is not None:
        rows = inputs.attribution.to_csv_rows()
        _write_csv(tables / "attribution.csv", rows)
        chunks.append(f"Dataset: {inputs.attribution.dataset}")
        chunks.append("")
        chunks.append(_md_table(rows[0], rows[1:]))
        chunks.append("")
        total = round_half_up(inputs.attribution.efficiency_total, 4)
        chunks.append(f"Sum of omission effects: {total}")
    else:
        chunks.append("No data.")
    chunks.append("")

    chunks.append("## Option-swapping robustness")
    chunks.append("")
    if inputs.robustness:
        rows = _robustness_rows(inputs.robustness)
        _write_csv(tables / "robustness.csv", rows)
        chunks.append(_md_table(rows[0], rows[1:]))
    else:
        chunks.append("No data.")
    chunks.append("")

    chunks.append("## Step lengths")
    chunks.append("")
    if inputs.profiles:
        rows = _profile_rows(inputs.profiles)
        _write_csv(tables / "step_lengths.csv", rows)
        # the full grid is wide; the report shows totals only
        head = ["trace_id", "language", "total_words", "total_math_tokens"]
        body = [[r[0], r[1], r[-2], r[-1]] for r in rows[1:]]
        chunks.append(_md_table(head, body))
    else:
        chunks.append("No data.")
    chunks.append("")

    report_path = out / "report.md"
    report_path.write_text("\n".join(chunks), encoding="utf-8")
    return report_path
