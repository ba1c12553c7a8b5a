"""comat: a symbolic-conversion prompting pipeline for math word problems.

The pipeline renders structured conversion prompts, drives an LLM backend
(real or scripted), audits the produced symbolic form with an exact
rational solver, scores answers, and attributes accuracy to individual
prompt steps with exact Shapley values.
"""
from __future__ import annotations

from .analysis import (
    InsufficientDataError,
    RobustnessSummary,
    Segment,
    StepLengthProfile,
    count_math_tokens,
    count_words,
    load_robustness_csv,
    profile_trace,
    reassemble,
    segment_spans,
    segment_trace,
    summarize_robustness,
)
from .attribution import (
    AVERAGE_DATASET,
    AttributionError,
    AttributionResult,
    IncompleteTableError,
    PerformanceTable,
    build_performance_table,
    efficiency_identity,
    marginal_contribution,
    shapley_values,
    step_delta_vs_full,
)
from .config import RunConfig, parse_config_file, resolve_config
from .errors import ComatError, ConfigError
from .normalize import canon, format_percent, parse_number, round_half_up, strip_separators
from .evaluation import (
    EmptyRunError,
    EvaluationError,
    ExtractedAnswer,
    InvalidVerdictError,
    JUDGE_SYSTEM_PROMPT,
    JUDGE_USER_TEMPLATE,
    MatchVerdict,
    OptionMatch,
    RunSummary,
    TraceRecord,
    build_judge_request,
    exact_match,
    extract_final_answer,
    judge_answer,
    last_three_sentences,
    levenshtein,
    match_to_option,
    parse_verdict,
    score_run,
)
from .gateway import (
    CacheStats,
    CompletionRequest,
    CompletionResponse,
    Gateway,
    GatewayError,
    GenerationParams,
    HttpBackend,
    Message,
    MockBackend,
    ResponseCache,
    ScriptMissError,
    cache_key,
)
from .prompting import (
    ALL_STEPS,
    CallMode,
    EXECUTION_PHRASE,
    MATCHING_PHRASE,
    Method,
    OMISSION_GRID,
    PipelineVariant,
    PromptBundle,
    SECTION_HEADERS,
    STEP_INSTRUCTIONS,
    Step,
    TEMPLATE_VERSION,
    TemplateError,
    enumerate_variants,
    list_exemplars,
    parse_steps,
    render_execution_prompt,
    render_prompt,
    section_structure,
    step_instructions_present,
    subset_label,
)
from .records import (
    DistractorPolicy,
    GoldAnswer,
    GoldKind,
    PerturbationPlan,
    QuestionRecord,
    RecordError,
    UnsupportedRecordError,
    ValidationError,
    build_sibling_pool,
    expand_perturbation_suite,
    load_dataset,
    parse_record,
    perturbed_to_json_dict,
    swap_options,
)
from .runner import RunResult, execute_ablation, execute_run, process_record
from .symbolic import (
    ConsistencyVerdict,
    ExtractionResult,
    InfeasibleError,
    NonlinearityError,
    ParseError,
    Solution,
    SymbolicError,
    SymbolicProblem,
    UnderdeterminedError,
    check_consistency,
    extract_symbolic,
    parse_symbolic,
    pretty_print,
    solve,
)

__version__ = "0.1.0"
