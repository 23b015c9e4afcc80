"""Domain types shared by all modules, and skill composition.

A skill is a fixed human-authored scaffold plus a learned augmentation of
item-agnostic rubric-construction rules. Composition keeps the scaffold
byte-for-byte intact and marks the augmentation with a reserved header line
so the two parts stay mechanically separable for auditing.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Literal

from .errors import ReservedHeaderError

# Reserved text: may not occur in dataset texts, stems, or proposed deltas.
DELTA_HEADER = "LEARNED RUBRIC CONSTRUCTION RULES:"
_DELTA_SENTINEL = f"\n\n{DELTA_HEADER}\n\n"

VariantLabel = Literal["weak", "medium", "strong", "custom"]
ParseStatus = Literal["ok", "clamped", "fallback"]


@dataclass(frozen=True)
class ScoreScale:
    """Discrete integer score range for one item."""

    min_score: int
    max_score: int

    def __post_init__(self):
        if self.min_score >= self.max_score:
            raise ValueError(f"min_score {self.min_score} must be < max_score {self.max_score}")

    @property
    def num_levels(self) -> int:
        return self.max_score - self.min_score + 1

    def contains(self, value: int) -> bool:
        return self.min_score <= value <= self.max_score

    def clamp(self, value: int) -> int:
        return min(max(value, self.min_score), self.max_score)


@dataclass(frozen=True)
class Item:
    """An assessment question with its score range and optional expert rubric."""

    item_id: str
    stem_text: str
    scale: ScoreScale
    expert_rubric: str | None = None

    def __post_init__(self):
        if not self.stem_text:
            raise ValueError("stem_text must be non-empty")
        if not self.item_id:
            raise ValueError("item_id must be non-empty")


@dataclass(frozen=True)
class LabeledResponse:
    """A student response paired with its human score."""

    response_id: str
    item_id: str
    text: str
    human_score: int


@dataclass(frozen=True)
class Skill:
    """Scaffold text plus learned augmentation; composes to the rubric-generation instruction."""

    scaffold: str
    delta: str = ""
    variant_label: VariantLabel = "custom"
    version: int = 0

    def __post_init__(self):
        if not self.scaffold:
            raise ValueError("scaffold must be non-empty")
        if (self.version == 0) != (self.delta == ""):
            raise ValueError("version 0 iff delta is empty")
        if self.version < 0:
            raise ValueError("version must be non-negative")


@dataclass(frozen=True)
class Rubric:
    """Item-specific scoring criteria generated from a skill.

    produced_by_skill_version is -1 for rubrics not produced by a skill
    (the dataset-provided expert rubric).
    """

    item_id: str
    text: str
    produced_by_skill_version: int
    iteration: int

    def __post_init__(self):
        if not self.text:
            raise ValueError("rubric text must be non-empty")


@dataclass(frozen=True)
class ScoreRecord:
    """One scored response as produced by the LLM scorer."""

    response_id: str
    predicted_score: int
    justification: str
    parse_status: ParseStatus
    raw_completion: str


def compose_skill(skill: Skill) -> str:
    """Compose scaffold and delta into the text fed to rubric generation.

    An empty delta returns the scaffold unchanged; otherwise the delta is
    appended under the reserved header so the scaffold is never rewritten.
    """
    if skill.delta == "":
        return skill.scaffold
    return f"{skill.scaffold}{_DELTA_SENTINEL}{skill.delta}"


def split_composed_skill(text: str) -> tuple[str, str]:
    """Invert compose_skill for texts whose parts do not contain the header line."""
    idx = text.find(_DELTA_SENTINEL)
    if idx < 0:
        return text, ""
    return text[:idx], text[idx + len(_DELTA_SENTINEL):]


def check_reserved_header(text: str, where: str) -> None:
    """Raise if the reserved composition header occurs in text."""
    if DELTA_HEADER in text:
        raise ReservedHeaderError(f"reserved header line present in {where}")


# --- persistence -----------------------------------------------------------
#
# All core types serialize to line-delimited JSON with snake_case fields.
# Scales embed as {"min_score": ..., "max_score": ...}.

def to_json_dict(obj) -> dict:
    return asdict(obj)


def scale_from_dict(d: dict) -> ScoreScale:
    return ScoreScale(min_score=d["min_score"], max_score=d["max_score"])


def item_from_dict(d: dict) -> Item:
    return Item(
        item_id=d["item_id"],
        stem_text=d["stem_text"],
        scale=scale_from_dict(d["scale"]),
        expert_rubric=d.get("expert_rubric"),
    )


def labeled_response_from_dict(d: dict) -> LabeledResponse:
    return LabeledResponse(
        response_id=d["response_id"],
        item_id=d["item_id"],
        text=d["text"],
        human_score=d["human_score"],
    )


def skill_from_dict(d: dict) -> Skill:
    return Skill(
        scaffold=d["scaffold"],
        delta=d["delta"],
        variant_label=d["variant_label"],
        version=d["version"],
    )


def rubric_from_dict(d: dict) -> Rubric:
    return Rubric(
        item_id=d["item_id"],
        text=d["text"],
        produced_by_skill_version=d["produced_by_skill_version"],
        iteration=d["iteration"],
    )


def score_record_from_dict(d: dict) -> ScoreRecord:
    return ScoreRecord(
        response_id=d["response_id"],
        predicted_score=d["predicted_score"],
        justification=d["justification"],
        parse_status=d["parse_status"],
        raw_completion=d["raw_completion"],
    )


def write_jsonl(path, objs: Iterable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            d = to_json_dict(obj) if not isinstance(obj, dict) else obj
            fh.write(json.dumps(d, ensure_ascii=False) + "\n")


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
