"""Command-line interface.

Subcommands: run, ablate, shapley, perturb, analyze, solve.  Flags beat
environment variables beat the --config file beat built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import analysis, report
from .attribution import (
    AttributionError,
    PerformanceTable,
    efficiency_identity,
    shapley_values,
)
from .config import RunConfig, resolve_config
from .errors import ComatError, ConfigError
from .evaluation import score_run
from .normalize import round_half_up
from .prompting import TEMPLATE_VERSION
from .records import (
    PerturbationPlan,
    build_sibling_pool,
    expand_perturbation_suite,
    load_dataset,
    perturbed_to_json_dict,
)
from .runner import (
    EXIT_FATAL,
    EXIT_OK,
    EXIT_PARTIAL,
    execute_ablation,
    execute_run,
    read_traces,
)
from .symbolic import SymbolicError, parse_symbolic, solve


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--concurrency", type=int, default=None)
    parser.add_argument("--limit", type=int, default=None, help="max items (0 allowed)")
    parser.add_argument("--format", default=None, help="dataset format tag")
    parser.add_argument("--backend", choices=["mock", "http"], default=None)
    parser.add_argument("--model", default=None)
    parser.add_argument("--steps", default=None, help="active conversion steps, e.g. 1,3")
    parser.add_argument("--call-mode", choices=["single", "two"], default=None)
    parser.add_argument("--scorer", choices=["exact", "judge"], default=None)
    parser.add_argument("--method", choices=["comat", "cot", "standard"], default=None)
    parser.add_argument("--exemplar", default=None)
    parser.add_argument("--judge-model", default=None)
    parser.add_argument("--mock-script", default=None, help="JSONL script for the mock backend")
    parser.add_argument("--cache-dir", default=None)
    parser.add_argument("--api-base", default=None)
    parser.add_argument("--resume", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comat",
        description="Symbolic-conversion prompting pipeline: run, ablate, attribute, perturb.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="score one method over a dataset")
    p_run.add_argument("dataset", help="dataset file (JSONL)")
    _add_common_flags(p_run)

    p_ablate = sub.add_parser("ablate", help="run all 16 step-omission variants")
    p_ablate.add_argument("dataset")
    _add_common_flags(p_ablate)

    p_shapley = sub.add_parser("shapley", help="exact step attribution from a grid CSV")
    p_shapley.add_argument("table", help="CSV with columns subset,dataset,accuracy")
    p_shapley.add_argument("--dataset", default=None, help="dataset column to attribute")
    _add_common_flags(p_shapley)

    p_perturb = sub.add_parser("perturb", help="emit option-swapped dataset variants")
    p_perturb.add_argument("dataset")
    p_perturb.add_argument("--variants", type=int, default=5)
    p_perturb.add_argument("--repeats", type=int, default=3)
    _add_common_flags(p_perturb)

    p_analyze = sub.add_parser("analyze", help="segment traces and emit the report")
    p_analyze.add_argument("run_dir", help="directory containing traces.jsonl")
    _add_common_flags(p_analyze)

    p_solve = sub.add_parser("solve", help="solve a symbolic problem file")
    p_solve.add_argument("problem", help="problem file in the constraint mini-language")
    p_solve.add_argument("--derivation", action="store_true", help="print solver steps")
    _add_common_flags(p_solve)

    return parser


_CLI_CONFIG_KEYS = (
    "seed", "out", "concurrency", "limit", "format", "backend", "model",
    "steps", "call_mode", "scorer", "method", "exemplar", "judge_model",
    "mock_script", "cache_dir", "api_base", "resume",
)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cli_values: dict[str, object] = {}
    for key in _CLI_CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cli_values[key] = value
    if getattr(args, "dataset", None):
        cli_values["dataset"] = args.dataset
    return resolve_config(cli_values, config_path=args.config)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    result = execute_run(config)
    if result.summary is not None:
        s = result.summary
        print(
            f"{s.dataset}/{s.method}: accuracy {s.accuracy} "
            f"({s.n_correct}/{s.n} correct, {s.n_invalid} invalid) -> {result.run_dir}"
        )
    return result.exit_code


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    code, run_dir = execute_ablation(config)
    print(f"ablation grid written to {run_dir}")
    return code


def _cmd_shapley(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    table = PerformanceTable.from_csv(args.table)
    datasets = table.datasets()
    if not datasets:
        raise ConfigError(f"{args.table}: empty table")
    dataset = args.dataset or ("average" if "average" in datasets else datasets[0])
    result = shapley_values(table, dataset)

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = result.to_csv_rows()
    with open(out / "attribution.csv", "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(rows)
    (out / "attribution.json").write_text(
        json.dumps(result.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )

    total = round_half_up(result.efficiency_total, 2)
    holds = efficiency_identity(result, table)
    print(f"dataset: {dataset}")
    for step in sorted(result.phi_omission, key=lambda s: s.number):
        phi = round_half_up(result.phi_omission[step], 4)
        benefit = round_half_up(-result.phi_omission[step], 4)
        print(f"  {step.value}: omission {phi}  benefit {benefit}")
    print(
        f"sum of omission effects: {total} "
        f"(= accuracy(all omitted) - accuracy(none omitted): {'OK' if holds else 'MISMATCH'})"
    )
    return EXIT_OK if holds else EXIT_PARTIAL


def _cmd_perturb(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    limit = None if config.limit < 0 else config.limit
    records, errors = load_dataset(config.dataset, config.format, limit=limit)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    out_path = out / "perturbed.jsonl"
    n_rows = 0
    n_skipped = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for record in records:
            plan = PerturbationPlan(
                variant_count=args.variants,
                repeats_per_variant=args.repeats,
                seed=config.seed,
                sibling_pool=build_sibling_pool(records, exclude_id=record.id),
            )
            try:
                for variant_idx, repeat_idx, perturbed in expand_perturbation_suite(record, plan):
                    fh.write(
                        json.dumps(
                            perturbed_to_json_dict(perturbed, plan, variant_idx, repeat_idx),
                            sort_keys=True,
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
                    n_rows += 1
            except ComatError as exc:
                n_skipped += 1
                print(f"skipped {record.id}: {exc}", file=sys.stderr)
    print(f"{n_rows} perturbed rows -> {out_path}")
    for lineno, err in errors:
        print(f"load error at line {lineno}: {err}", file=sys.stderr)
    return EXIT_PARTIAL if (errors or n_skipped) else EXIT_OK


def _cmd_analyze(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    run_dir = Path(args.run_dir)
    traces_path = run_dir / "traces.jsonl"
    if not traces_path.exists():
        raise ConfigError(f"no traces.jsonl under {run_dir}")
    traces = read_traces(traces_path)

    profiles = []
    for trace in traces:
        language = "zh" if "gaokao" in trace.dataset.lower() else "en"
        profiles.append((trace.record_id, analysis.profile_trace(trace.response_text, language)))

    summaries = []
    if traces:
        by_key: dict[tuple[str, str, str], list] = {}
        for t in traces:
            by_key.setdefault((t.dataset, t.method, t.steps), []).append(t)
        for (dataset, method, steps), group in sorted(by_key.items()):
            summaries.append(
                score_run(
                    group,
                    dataset=dataset,
                    method=method,
                    steps=steps,
                    template_version=TEMPLATE_VERSION,
                    seed=config.seed,
                )
            )

    out_dir = Path(config.out) if config.out != RunConfig().out else run_dir
    inputs = report.ReportInputs(
        seed=config.seed,
        summaries=tuple(summaries),
        profiles=tuple(profiles),
    )
    report_path = report.emit_report(out_dir, inputs)
    print(f"report -> {report_path}")
    return EXIT_OK


def _cmd_solve(args: argparse.Namespace) -> int:
    try:
        text = Path(args.problem).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read problem file: {exc}") from exc
    try:
        problem = parse_symbolic(text)
        solution = solve(problem)
    except SymbolicError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    target = problem.target
    ordered = [target] + [n for n in sorted(solution.assignment) if n != target]
    for name in ordered:
        value = solution.assignment[name]
        rendered = str(value.numerator) if value.denominator == 1 else str(value)
        print(f"{name} = {rendered}")
    if args.derivation:
        for label, text_line in solution.derivation:
            print(f"  [{label}] {text_line}")
    return EXIT_OK


_HANDLERS = {
    "run": _cmd_run,
    "ablate": _cmd_ablate,
    "shapley": _cmd_shapley,
    "perturb": _cmd_perturb,
    "analyze": _cmd_analyze,
    "solve": _cmd_solve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except AttributionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except ComatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
