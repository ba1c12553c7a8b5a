"""Step attribution over ablation results.

The ablation grid measures accuracy for every subset of omitted
conversion steps.  Treating that grid as a cooperative game over the four
steps (a coalition = the set of omitted steps), each step's influence is
its exact Shapley value: its marginal effect on accuracy averaged over
all 24 arrival orders.  All arithmetic is done in Fractions so the
published three-decimal identities hold exactly.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from itertools import permutations
from pathlib import Path
from typing import TYPE_CHECKING

from .errors import ComatError
from .normalize import round_half_up
from .prompting import OMISSION_GRID, ALL_STEPS, Step, parse_steps, subset_label

if TYPE_CHECKING:
    from collections.abc import Iterable

    from .evaluation import RunSummary

AVERAGE_DATASET = "average"

STEP_ORDER: tuple[Step, ...] = (Step.S1, Step.S2, Step.S3, Step.S4)


class AttributionError(ComatError):
    pass


class IncompleteTableError(AttributionError):
    """The ablation grid is missing subsets needed for exact attribution."""

    def __init__(self, dataset: str, missing: tuple[frozenset[Step], ...]) -> None:
        labels = ["{" + (subset_label(s) or "none") + "}" for s in missing]
        super().__init__(
            f"ablation grid for {dataset!r} is missing {len(missing)} subsets: "
            + ", ".join(labels)
        )
        self.dataset = dataset
        self.missing = missing


@dataclass
class PerformanceTable:
    """Accuracy indexed by (omitted-step subset, dataset)."""

    _cells: dict[tuple[frozenset[Step], str], Fraction] = field(default_factory=dict)

    def set(self, omitted: frozenset[Step], dataset: str, accuracy: Fraction) -> None:
        key = (frozenset(omitted), dataset)
        if key in self._cells and self._cells[key] != accuracy:
            raise AttributionError(
                f"conflicting accuracy for subset {{{subset_label(key[0]) or 'none'}}} "
                f"on {dataset!r}: {self._cells[key]} vs {accuracy}"
            )
        self._cells[key] = accuracy

    def datasets(self) -> tuple[str, ...]:
        return tuple(sorted({ds for _, ds in self._cells}))

    def subsets(self, dataset: str) -> tuple[frozenset[Step], ...]:
        return tuple(s for s, ds in self._cells if ds == dataset)

    def value(self, omitted: frozenset[Step], dataset: str) -> Fraction:
        try:
            return self._cells[(frozenset(omitted), dataset)]
        except KeyError:
            raise AttributionError(
                f"no accuracy recorded for subset {{{subset_label(frozenset(omitted)) or 'none'}}} "
                f"on {dataset!r}"
            ) from None

    def mean_value(self, omitted: frozenset[Step], datasets: tuple[str, ...] | None = None) -> Fraction:
        """Mean accuracy across datasets; a stored overall-average column is
        excluded so it never double-counts."""
        names = datasets if datasets is not None else tuple(
            ds for ds in self.datasets() if ds.lower() != AVERAGE_DATASET
        )
        if not names:
            raise AttributionError("no datasets to average over")
        values = [self.value(omitted, ds) for ds in names]
        return sum(values, Fraction(0)) / len(values)

    def missing_subsets(self, dataset: str) -> tuple[frozenset[Step], ...]:
        have = set(self.subsets(dataset))
        return tuple(s for s in OMISSION_GRID if s not in have)

    def is_complete(self, dataset: str) -> bool:
        return not self.missing_subsets(dataset)

    def require_complete(self, dataset: str) -> None:
        missing = self.missing_subsets(dataset)
        if missing:
            raise IncompleteTableError(dataset, missing)

    # -- serialization ------------------------------------------------------

    @classmethod
    def from_rows(cls, rows: list[tuple[str, str, str]]) -> PerformanceTable:
        """Build from (subset-label, dataset, accuracy) triples.

        Partial grids are accepted; completeness is checked only when an
        exact attribution is requested.
        """
        table = cls()
        for subset_text, dataset, accuracy_text in rows:
            label = subset_text.strip().lower()
            if label in ("", "none", "-"):
                omitted: frozenset[Step] = frozenset()
            else:
                omitted = parse_steps(label)
            try:
                accuracy = Fraction(Decimal(accuracy_text.strip()))
            except (ValueError, ArithmeticError) as exc:
                raise AttributionError(f"bad accuracy value {accuracy_text!r}: {exc}") from exc
            table.set(omitted, dataset.strip(), accuracy)
        return table

    @classmethod
    def from_csv(cls, path: str | Path) -> PerformanceTable:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip().lower() for h in header] != ["subset", "dataset", "accuracy"]:
                raise AttributionError(
                    f"{path}: expected header subset,dataset,accuracy, got {header}"
                )
            rows = [(r[0], r[1], r[2]) for r in reader if r]
        return cls.from_rows(rows)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["subset", "dataset", "accuracy"])
            for (omitted, dataset), accuracy in sorted(
                self._cells.items(),
                key=lambda kv: (kv[0][1], len(kv[0][0]), subset_label(kv[0][0])),
            ):
                writer.writerow(
                    [subset_label(omitted), dataset, str(round_half_up(accuracy, 2))]
                )


def build_performance_table(summaries: Iterable[RunSummary]) -> PerformanceTable:
    """Arrange per-run accuracies into the omitted-subset grid.

    Each summary's ``steps`` field names the conversion steps that were left
    active for its run, so the grid cell is keyed by the complementary
    omitted subset.  Every dataset present must cover the same subsets;
    uneven coverage is an error because it would silently skew any mean
    taken across datasets.
    """
    table = PerformanceTable()
    for summary in summaries:
        active = parse_steps(summary.steps)
        omitted = frozenset(ALL_STEPS) - active
        table.set(omitted, summary.dataset, Fraction(Decimal(str(summary.accuracy))))
    datasets = table.datasets()
    if datasets:
        reference = set(table.subsets(datasets[0]))
        for dataset in datasets[1:]:
            if set(table.subsets(dataset)) != reference:
                raise AttributionError(
                    f"inconsistent subset coverage: dataset {dataset!r} does not "
                    f"match {datasets[0]!r}"
                )
    return table


def marginal_contribution(
    table: PerformanceTable, step: Step, omitted_before: frozenset[Step], dataset: str
) -> Fraction:
    """Accuracy change from additionally omitting one step.

    ``omitted_before`` must not already contain the step.
    """
    if step in omitted_before:
        raise AttributionError(f"step {step.value} already omitted")
    return table.value(omitted_before | {step}, dataset) - table.value(omitted_before, dataset)


@dataclass(frozen=True)
class AttributionResult:
    """Exact Shapley attribution for the four conversion steps."""

    dataset: str
    # phi_omission[s]: average accuracy change caused by omitting s.
    # Negative means the step helps.
    phi_omission: dict[Step, Fraction]
    marginals: dict[Step, tuple[Fraction, ...]]

    @property
    def phi_benefit(self) -> dict[Step, Fraction]:
        """The same attribution signed as step value: positive = helpful."""
        return {s: -v for s, v in self.phi_omission.items()}

    @property
    def efficiency_total(self) -> Fraction:
        return sum(self.phi_omission.values(), Fraction(0))

    def ranking(self) -> tuple[Step, ...]:
        """Steps from most to least beneficial; ties break by step number."""
        return tuple(
            sorted(STEP_ORDER, key=lambda s: (-self.phi_benefit[s], s.number))
        )

    def to_json_dict(self) -> dict[str, object]:
        ranks = {s: i + 1 for i, s in enumerate(self.ranking())}
        return {
            "dataset": self.dataset,
            "permutations": 24,
            "marginals_per_step": 24,
            "steps": {
                s.value: {
                    "phi_omission": str(self.phi_omission[s]),
                    "phi_omission_decimal": str(round_half_up(self.phi_omission[s], 4)),
                    "phi_benefit": str(self.phi_benefit[s]),
                    "rank": ranks[s],
                    "marginals": [str(m) for m in self.marginals[s]],
                }
                for s in STEP_ORDER
            },
            "efficiency_total": str(self.efficiency_total),
            "efficiency_total_decimal": str(round_half_up(self.efficiency_total, 4)),
        }

    def to_csv_rows(self) -> list[list[str]]:
        ranks = {s: i + 1 for i, s in enumerate(self.ranking())}
        rows = [["step", "phi_omission", "phi_benefit", "rank"]]
        for s in STEP_ORDER:
            rows.append(
                [
                    s.value,
                    str(round_half_up(self.phi_omission[s], 4)),
                    str(round_half_up(self.phi_benefit[s], 4)),
                    str(ranks[s]),
                ]
            )
        return rows


def shapley_values(table: PerformanceTable, dataset: str) -> AttributionResult:
    """Exact Shapley attribution by full permutation enumeration.

    Four steps mean 24 permutations and 96 marginal evaluations; no
    sampling, no floats.  The grid must be complete for the dataset.
    """
    table.require_complete(dataset)
    totals: dict[Step, Fraction] = {s: Fraction(0) for s in STEP_ORDER}
    marginals: dict[Step, list[Fraction]] = {s: [] for s in STEP_ORDER}
    for order in permutations(STEP_ORDER):
        omitted: frozenset[Step] = frozenset()
        for step in order:
            delta = marginal_contribution(table, step, omitted, dataset)
            totals[step] += delta
            marginals[step].append(delta)
            omitted = omitted | {step}
    phi = {s: totals[s] / 24 for s in STEP_ORDER}
    return AttributionResult(
        dataset=dataset,
        phi_omission=phi,
        marginals={s: tuple(ms) for s, ms in marginals.items()},
    )


def step_delta_vs_full(
    table: PerformanceTable, omitted: frozenset[Step], dataset: str
) -> Fraction:
    """Accuracy change of one ablation relative to the unablated pipeline."""
    return table.value(omitted, dataset) - table.value(frozenset(), dataset)


def efficiency_identity(result: AttributionResult, table: PerformanceTable) -> bool:
    """Shapley efficiency: the phi values sum to v(all omitted) - v(none)."""
    expected = table.value(ALL_STEPS, result.dataset) - table.value(frozenset(), result.dataset)
    return result.efficiency_total == expected
