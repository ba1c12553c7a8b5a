"""End-to-end run orchestration.

An execution walks a dataset through prompt rendering, completion,
optional symbolic audit, extraction, and scoring, then persists a
self-describing run directory: resolved config, traces, summaries, and
a manifest written last so a finished directory is recognizable.
"""
from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

from .config import RunConfig
from .errors import ComatError, ConfigError
from .evaluation import (
    ExtractedAnswer,
    InvalidVerdictError,
    RunSummary,
    SUMMARY_CSV_HEADER,
    TEXT,
    TraceRecord,
    exact_match,
    extract_final_answer,
    judge_answer,
    score_run,
)
from .gateway import (
    CompletionRequest,
    Gateway,
    GenerationParams,
    HttpBackend,
    Message,
    MockBackend,
    ResponseCache,
    cache_key,
)
from .prompting import (
    ALL_STEPS,
    CallMode,
    Method,
    PipelineVariant,
    PromptBundle,
    TEMPLATE_VERSION,
    enumerate_variants,
    parse_steps,
    render_execution_prompt,
    render_prompt,
    subset_label,
)
from .attribution import build_performance_table
from .records import QuestionRecord, load_dataset
from .symbolic import PARSED, SolveError, SymbolicError, extract_symbolic, solve

TRACES_NAME = "traces.jsonl"
SUMMARY_JSON_NAME = "summary.json"
SUMMARY_CSV_NAME = "summary.csv"
CONFIG_NAME = "config.resolved.json"
MANIFEST_NAME = "manifest.json"

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2


@dataclass
class RunResult:
    exit_code: int
    run_dir: Path
    summary: RunSummary | None
    traces: list[TraceRecord]


def build_gateway(config: RunConfig) -> Gateway:
    if config.backend == "mock":
        backend = MockBackend(config.mock_script or None)
    else:
        backend = HttpBackend(config.api_base, config.api_key)
    cache = None
    if config.cache_dir:
        cache = ResponseCache(config.cache_dir)
    return Gateway(backend, cache, concurrency=config.concurrency)


def variant_from_config(config: RunConfig) -> PipelineVariant:
    method = Method(config.method)
    if method is not Method.COMAT:
        return PipelineVariant(method=method)
    active = parse_steps(config.steps)
    return PipelineVariant(
        method=method,
        active_steps=active,
        call_mode=CallMode(config.call_mode),
    )


def _generation_params(config: RunConfig) -> GenerationParams:
    return GenerationParams(
        model=config.model,
        temperature=config.temperature,
        max_tokens=config.max_tokens,
    )


def _request(bundle: PromptBundle, params: GenerationParams) -> CompletionRequest:
    return CompletionRequest(
        messages=(
            Message("system", bundle.system_text),
            Message("user", bundle.user_text),
        ),
        params=params,
    )


def _steps_field(variant: PipelineVariant) -> str:
    if variant.method is not Method.COMAT:
        return ""
    return subset_label(variant.active_steps)


def process_record(
    record: QuestionRecord,
    variant: PipelineVariant,
    gateway: Gateway,
    config: RunConfig,
    *,
    dataset_name: str,
) -> TraceRecord:
    """One question through the full pipeline; never raises on item failure."""
    params = _generation_params(config)
    steps = _steps_field(variant)
    try:
        bundle = render_prompt(record, variant, exemplar_id=config.exemplar)
        request = _request(bundle, params)
        digest = cache_key(request)
        response = gateway.complete(request)
        response_text = response.text
        finish = response.finish_reason
        cached = response.cached
        latency = response.latency_ms
        if variant.method is Method.COMAT and variant.call_mode is CallMode.TWO:
            second = _request(render_execution_prompt(record, response.text), params)
            response2 = gateway.complete(second)
            response_text = response.text + "\n\n" + response2.text
            finish = response2.finish_reason
            cached = cached and response2.cached
            latency += response2.latency_ms
    except ComatError as exc:
        return TraceRecord(
            record_id=record.id,
            dataset=dataset_name,
            method=variant.method.value,
            steps=steps,
            prompt_digest="",
            response_text="",
            finish_reason="error",
            model=params.model,
            latency_ms=0,
            cached=False,
            extracted=ExtractedAnswer(TEXT, "", ""),
            gold_text=record.gold_text(),
            correct=False,
            invalid=True,
            score_path="error",
            error=str(exc),
        )

    symbolic_status = symbolic_program = solver_answer = None
    solver_agrees = None
    if variant.method is Method.COMAT:
        extraction = extract_symbolic(response_text)
        symbolic_status = extraction.status
        if extraction.status == PARSED and extraction.problem is not None:
            symbolic_program = extraction.program
            try:
                solution = solve(extraction.problem)
                target = extraction.problem.target
                solver_answer = str(solution.assignment[target])
            except SolveError:
                solver_answer = None
            except SymbolicError:
                solver_answer = None

    extracted = extract_final_answer(response_text, record)
    if solver_answer is not None:
        extracted_value = extracted.as_fraction()
        if extracted_value is not None:
            solver_agrees = extracted_value == Fraction(solver_answer)

    judge_verdict: int | None = None
    error: str | None = None
    if config.scorer == "judge":
        try:
            judge_params = GenerationParams(
                model=config.judge_model,
                temperature=config.temperature,
                max_tokens=config.max_tokens,
            )
            judge_verdict = judge_answer(gateway, response_text, record, judge_params)
            correct = judge_verdict == 1
            path = "judge"
        except (InvalidVerdictError, ComatError) as exc:
            correct = False
            path = "error"
            error = str(exc)
    else:
        verdict = exact_match(extracted, record)
        correct = verdict.correct
        path = verdict.path

    return TraceRecord(
        record_id=record.id,
        dataset=dataset_name,
        method=variant.method.value,
        steps=steps,
        prompt_digest=digest,
        response_text=response_text,
        finish_reason=finish,
        model=params.model,
        latency_ms=latency,
        cached=cached,
        extracted=extracted,
        gold_text=record.gold_text(),
        correct=correct,
        invalid=extracted.is_empty(),
        score_path=path,
        judge_verdict=judge_verdict,
        symbolic_status=symbolic_status,
        symbolic_program=symbolic_program,
        solver_answer=solver_answer,
        solver_agrees=solver_agrees,
        error=error,
    )


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _dump_json(payload: object) -> str:
    return json.dumps(payload, sort_keys=True, ensure_ascii=False)


def write_traces(path: Path, traces: list[TraceRecord]) -> None:
    lines = [_dump_json(t.to_json_dict()) for t in traces]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_traces(path: Path) -> list[TraceRecord]:
    traces = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            traces.append(TraceRecord.from_json_dict(json.loads(line)))
    return traces


def _write_manifest(run_dir: Path, payload: dict[str, object]) -> None:
    # written last, atomically: a directory with a manifest is complete
    tmp = run_dir / f".{MANIFEST_NAME}.tmp"
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, run_dir / MANIFEST_NAME)


def _empty_summary(config: RunConfig, dataset_name: str, steps: str) -> RunSummary:
    return RunSummary(
        dataset=dataset_name,
        method=config.method,
        steps=steps,
        accuracy=Decimal("0.00"),
        n=0,
        n_correct=0,
        n_invalid=0,
        parse_rate=None,
        template_version=TEMPLATE_VERSION,
        seed=config.seed,
    )


def _write_summary_files(run_dir: Path, summaries: list[RunSummary]) -> None:
    payload = [s.to_json_dict() for s in summaries]
    body: object = payload[0] if len(payload) == 1 else payload
    (run_dir / SUMMARY_JSON_NAME).write_text(
        json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with open(run_dir / SUMMARY_CSV_NAME, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_CSV_HEADER)
        for s in summaries:
            writer.writerow(s.to_csv_row())


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------

def _load_records(config: RunConfig) -> tuple[list[QuestionRecord], list[str]]:
    if not config.dataset:
        raise ConfigError("no dataset path configured")
    limit = None if config.limit < 0 else config.limit
    records, errors = load_dataset(config.dataset, config.format, limit=limit)
    return records, [f"line {lineno}: {err}" for lineno, err in errors]


def _dataset_name(config: RunConfig) -> str:
    return Path(config.dataset).stem if config.dataset else "dataset"


def execute_run(config: RunConfig, *, gateway: Gateway | None = None) -> RunResult:
    """The `run` subcommand: one variant over one dataset."""
    config.validate()
    variant = variant_from_config(config)
    run_dir = Path(config.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    config.write_resolved(run_dir / CONFIG_NAME)

    records, load_errors = _load_records(config)
    dataset_name = _dataset_name(config)
    steps = _steps_field(variant)
    gateway = gateway or build_gateway(config)

    existing: dict[str, TraceRecord] = {}
    traces_path = run_dir / TRACES_NAME
    if config.resume and traces_path.exists():
        existing = {t.record_id: t for t in read_traces(traces_path)}

    started = time.time()
    traces: list[TraceRecord] = []
    if records:
        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            futures = []
            for record in records:
                if record.id in existing:
                    futures.append(None)
                    continue
                futures.append(
                    pool.submit(
                        process_record,
                        record,
                        variant,
                        gateway,
                        config,
                        dataset_name=dataset_name,
                    )
                )
            for record, future in zip(records, futures):
                traces.append(existing[record.id] if future is None else future.result())
    write_traces(traces_path, traces)

    if traces:
        summary = score_run(
            traces,
            dataset=dataset_name,
            method=config.method,
            steps=steps,
            template_version=TEMPLATE_VERSION,
            seed=config.seed,
        )
    else:
        summary = _empty_summary(config, dataset_name, steps)
    _write_summary_files(run_dir, [summary])

    item_errors = [t for t in traces if t.score_path == "error"]
    stats = gateway.stats
    _write_manifest(
        run_dir,
        {
            "command": "run",
            "n_records": len(records),
            "n_traces": len(traces),
            "n_errors": len(item_errors),
            "load_errors": load_errors,
            "cache": {"hits": stats.hits, "misses": stats.misses, "writes": stats.writes},
            "elapsed_s": round(time.time() - started, 3),
            "template_version": TEMPLATE_VERSION,
            "seed": config.seed,
        },
    )
    exit_code = EXIT_PARTIAL if (item_errors or load_errors) else EXIT_OK
    return RunResult(exit_code, run_dir, summary, traces)


def execute_ablation(config: RunConfig, *, gateway: Gateway | None = None) -> tuple[int, Path]:
    """The `ablate` subcommand: all 16 step subsets over one dataset.

    Variants run cheapest-first (fewest active steps), so interrupting a
    budget-limited grid still leaves a useful partial table.
    """
    config.validate()
    run_dir = Path(config.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    config.write_resolved(run_dir / CONFIG_NAME)

    records, load_errors = _load_records(config)
    dataset_name = _dataset_name(config)
    gateway = gateway or build_gateway(config)

    variants = sorted(enumerate_variants(), key=lambda v: len(v.active_steps))
    summaries: list[RunSummary] = []
    any_errors = bool(load_errors)
    for variant in variants:
        label = subset_label(variant.omitted_steps) or "none"
        variant_dir = run_dir / "variants" / f"omit_{label.replace(',', '_')}"
        variant_dir.mkdir(parents=True, exist_ok=True)
        traces = [
            process_record(r, variant, gateway, config, dataset_name=dataset_name)
            for r in records
        ]
        write_traces(variant_dir / TRACES_NAME, traces)
        if traces:
            summary = score_run(
                traces,
                dataset=dataset_name,
                method=variant.method.value,
                steps=_steps_field(variant),
                template_version=TEMPLATE_VERSION,
                seed=config.seed,
            )
        else:
            summary = _empty_summary(config, dataset_name, _steps_field(variant))
        summaries.append(summary)
        any_errors = any_errors or any(t.score_path == "error" for t in traces)

    table = build_performance_table(summaries)
    table.to_csv(run_dir / "ablation.csv")
    _write_summary_files(run_dir, summaries)
    _write_manifest(
        run_dir,
        {
            "command": "ablate",
            "n_records": len(records),
            "n_variants": len(variants),
            "complete": table.is_complete(dataset_name),
            "load_errors": load_errors,
            "template_version": TEMPLATE_VERSION,
            "seed": config.seed,
        },
    )
    return (EXIT_PARTIAL if any_errors else EXIT_OK), run_dir
