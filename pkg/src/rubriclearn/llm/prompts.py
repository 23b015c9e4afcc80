"""Prompt rendering for the three LLM roles.

Scorer and rubric-generator requests pin temperature 0 (greedy decoding);
diagnosis requests omit temperature entirely because reasoning-model
endpoints reject the field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..core import Item, Rubric
from ..metrics import ErrorStats
from . import templates


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call; temperature None means the field is omitted."""

    messages: tuple[tuple[str, str], ...]
    temperature: float | None = 0.0
    max_output_tokens: int = 1024
    model_name: str = ""

    def __post_init__(self):
        if not any(role == "user" for role, _ in self.messages):
            raise ValueError("at least one user message required")

    @property
    def text(self) -> str:
        """Concatenated message contents; what the mock provider matches on."""
        return "\n".join(content for _, content in self.messages)


def user_request(content: str, temperature: float | None, max_output_tokens: int) -> ChatRequest:
    return ChatRequest(
        messages=(("user", content),),
        temperature=temperature,
        max_output_tokens=max_output_tokens,
    )


def render_rubric_prompt(skill_text: str, item: Item) -> ChatRequest:
    if not skill_text:
        raise ValueError("skill_text must be non-empty")
    content = templates.render(
        templates.load_template("rubric_generation"),
        {"skill": skill_text, "question": item.stem_text},
    )
    return user_request(content, temperature=0.0, max_output_tokens=4096)


def render_scoring_prompt(rubric: Rubric, item: Item, response_text: str) -> ChatRequest:
    content = templates.render(
        templates.load_template("scoring"),
        {"question": item.stem_text, "rubric": rubric.text, "response": response_text},
    )
    return user_request(content, temperature=0.0, max_output_tokens=1024)


def render_no_rubric_prompt(item: Item, response_text: str) -> ChatRequest:
    """Scoring prompt with the rubric block elided; same output-format contract."""
    content = templates.render(
        templates.load_template("scoring_no_rubric"),
        {
            "question": item.stem_text,
            "response": response_text,
            "min_score": str(item.scale.min_score),
            "max_score": str(item.scale.max_score),
        },
    )
    return user_request(content, temperature=0.0, max_output_tokens=1024)


def format_error_stats(stats: ErrorStats) -> str:
    """Accuracy line, direction counts, then per-pair lines sorted by count desc."""
    lines = [
        f"Accuracy: {stats.accuracy:.4f} ({stats.exact_count}/{stats.total})",
        f"Over-scored: {stats.over_count}  Under-scored: {stats.under_count}  Exact: {stats.exact_count}",
    ]
    pairs = sorted(stats.per_pair.items(), key=lambda kv: (-kv[1], kv[0]))
    for (h, p), n in pairs:
        lines.append(f"human {h} -> predicted {p}: {n}")
    return "\n".join(lines)


def format_error_cases(error_cases: list[tuple[str, int, int, str]]) -> str:
    """Numbered case blocks: response text, human score, predicted score, justification."""
    blocks = []
    for i, (response_text, predicted, human, justification) in enumerate(error_cases, start=1):
        blocks.append(
            f"Case {i}:\n"
            f"Response: {response_text}\n"
            f"Human score: {human}\n"
            f"Predicted score: {predicted}\n"
            f"Scorer justification: {justification}"
        )
    return "\n\n".join(blocks)


def render_diagnosis_prompt(
    skill_text: str,
    rubric_text: str,
    stats: ErrorStats,
    error_cases: list[tuple[str, int, int, str]],
) -> ChatRequest:
    """Diagnosis request over all mis-scored cases; error_cases are
    (response_text, predicted, human, justification) tuples."""
    if not error_cases:
        raise ValueError("error_cases must be non-empty")
    content = templates.render(
        templates.load_template("diagnosis"),
        {
            "skill": skill_text,
            "rubric": rubric_text,
            "error_stats": format_error_stats(stats),
            "all_errors": format_error_cases(error_cases),
        },
    )
    return user_request(content, temperature=None, max_output_tokens=8192)
