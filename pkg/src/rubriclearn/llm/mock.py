"""Deterministic mock provider for desk-scale tests and offline runs.

Behavior is a pure function of the request text. Scoring rules see the
rubric and response sections of the prompt; the hidden label is whatever the
test embedded in the response text after label_token, so agreement patterns
are fully scriptable. Diagnosis answers come from content-keyed rules or,
for simple scripts, a sequence memoized per distinct request text.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field

from ..errors import MockScriptError
from .parsing import DELTA_OUTPUT_HEADER
from .prompts import ChatRequest

_RUBRIC_REQUEST_MARK = "Based on the following test item, generate a scoring rubric."
_SCORING_REQUEST_MARK = "STUDENT RESPONSE:"
_RUBRIC_SECTION_MARK = "SCORING RUBRIC:"


@dataclass(frozen=True)
class RubricRule:
    rubric_text: str
    skill_contains: str | None = None  # None matches any rubric-generation request


@dataclass(frozen=True)
class ScoringRule:
    action: str  # "label" (read embedded label) or "fixed"
    score: int | None = None
    rubric_contains: str | None = None
    response_contains: str | None = None
    justification: str = "Scripted justification."
    malformed: bool = False  # emit no [[X]] marker, to exercise parse fallback

    def __post_init__(self):
        if self.action not in ("label", "fixed"):
            raise ValueError(f"unknown scoring action {self.action!r}")
        if self.action == "fixed" and self.score is None and not self.malformed:
            raise ValueError("fixed scoring rule needs a score")


@dataclass(frozen=True)
class DeltaRule:
    prompt_contains: str
    delta: str


@dataclass
class MockScript:
    rubric_rules: list[RubricRule] = field(default_factory=list)
    scoring_rules: list[ScoringRule] = field(default_factory=list)
    delta_rules: list[DeltaRule] = field(default_factory=list)
    delta_sequence: list[str] = field(default_factory=list)
    label_token: str = "LABEL="

    @classmethod
    def from_json_dict(cls, d: dict) -> "MockScript":
        return cls(
            rubric_rules=[RubricRule(**r) for r in d.get("rubric_rules", [])],
            scoring_rules=[ScoringRule(**r) for r in d.get("scoring_rules", [])],
            delta_rules=[DeltaRule(**r) for r in d.get("delta_rules", [])],
            delta_sequence=list(d.get("delta_sequence", [])),
            label_token=d.get("label_token", "LABEL="),
        )

    @classmethod
    def from_file(cls, path) -> "MockScript":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _section(text: str, start_mark: str, end_marks: list[str]) -> str:
    start = text.find(start_mark)
    if start < 0:
        return ""
    start += len(start_mark)
    end = len(text)
    for mark in end_marks:
        pos = text.find(mark, start)
        if 0 <= pos < end:
            end = pos
    return text[start:end]


class MockProvider:
    """Provider whose answers are a pure function of the request text."""

    def __init__(self, script: MockScript):
        self.script = script
        self.calls: list[str] = []
        self._lock = threading.Lock()
        self._delta_memo: dict[str, str] = {}

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def complete(self, request: ChatRequest) -> str:
        text = request.text
        with self._lock:
            self.calls.append(text)
        if DELTA_OUTPUT_HEADER in text:
            return self._diagnose(text)
        if _RUBRIC_REQUEST_MARK in text:
            return self._generate_rubric(text)
        if _SCORING_REQUEST_MARK in text:
            return self._score(text)
        raise MockScriptError("request matches no known prompt shape")

    def _generate_rubric(self, text: str) -> str:
        for rule in self.script.rubric_rules:
            if rule.skill_contains is None or rule.skill_contains in text:
                return rule.rubric_text
        raise MockScriptError("no rubric rule matches this rubric-generation request")

    def _score(self, text: str) -> str:
        rubric = _section(text, _RUBRIC_SECTION_MARK, [_SCORING_REQUEST_MARK])
        response = _section(text, _SCORING_REQUEST_MARK, ["\n\nScore this response"])
        for rule in self.script.scoring_rules:
            if rule.rubric_contains is not None and rule.rubric_contains not in rubric:
                continue
            if rule.response_contains is not None and rule.response_contains not in response:
                continue
            if rule.malformed:
                return rule.justification
            if rule.action == "label":
                score = self._embedded_label(response)
            else:
                score = rule.score
            return f"{rule.justification} [[{score}]]"
        raise MockScriptError("no scoring rule matches this scoring request")

    def _embedded_label(self, response_section: str) -> int:
        match = re.search(re.escape(self.script.label_token) + r"(\d+)", response_section)
        if not match:
            raise MockScriptError(
                f"scoring rule needs an embedded {self.script.label_token!r} label, none found"
            )
        return int(match.group(1))

    def _diagnose(self, text: str) -> str:
        for rule in self.script.delta_rules:
            if rule.prompt_contains in text:
                return f"{DELTA_OUTPUT_HEADER}\n{rule.delta}"
        with self._lock:
            if text in self._delta_memo:
                return self._delta_memo[text]
            idx = len(self._delta_memo)
            if idx >= len(self.script.delta_sequence):
                raise MockScriptError(
                    f"delta sequence exhausted after {idx} distinct diagnosis requests"
                )
            completion = f"{DELTA_OUTPUT_HEADER}\n{self.script.delta_sequence[idx]}"
            self._delta_memo[text] = completion
            return completion
