"""Prompt rendering, provider boundary, completion parsing, and the mock provider."""

from .mock import DeltaRule, MockProvider, MockScript, RubricRule, ScoringRule
from .parsing import DELTA_OUTPUT_HEADER, ExtractedScore, extract_delta, extract_score
from .prompts import (
    ChatRequest,
    format_error_cases,
    format_error_stats,
    render_diagnosis_prompt,
    render_no_rubric_prompt,
    render_rubric_prompt,
    render_scoring_prompt,
)
from .provider import (
    CallBudget,
    FailureInjector,
    HttpProvider,
    Provider,
    ProviderConfig,
    complete,
)
from .scoring import fallback_rate, modal_score, score_one, score_responses
from .templates import asset_checksums, load_scaffold, load_template, render

__all__ = [
    "CallBudget",
    "ChatRequest",
    "DELTA_OUTPUT_HEADER",
    "DeltaRule",
    "ExtractedScore",
    "FailureInjector",
    "HttpProvider",
    "MockProvider",
    "MockScript",
    "Provider",
    "ProviderConfig",
    "RubricRule",
    "ScoringRule",
    "asset_checksums",
    "complete",
    "extract_delta",
    "extract_score",
    "fallback_rate",
    "format_error_cases",
    "format_error_stats",
    "load_scaffold",
    "load_template",
    "modal_score",
    "render",
    "render_diagnosis_prompt",
    "render_no_rubric_prompt",
    "render_rubric_prompt",
    "render_scoring_prompt",
    "score_one",
    "score_responses",
]
