"""Test-set evaluation under the four scoring conditions and cross-item transfer.

Rubric generation is cached per (skill text, item) by content hash so
repeated conditions and the transfer grid do not multiply provider cost.
Relative gains follow the (new - old) / |old| convention computed from
unrounded QWK, undefined (None) when |old| < 1e-9.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

from .core import Item, LabeledResponse, Rubric, ScoreRecord, Skill, compose_skill, to_json_dict
from .errors import DataError, DegenerateDistributionError, MissingArtifactError
from .llm.prompts import render_no_rubric_prompt, render_rubric_prompt, render_scoring_prompt
from .llm.provider import Provider
from .llm.scoring import fallback_rate, score_responses
from .metrics import ConfusionMatrix, confusion, qwk

Condition = Literal["no_rubric", "s0", "s_best", "expert"]

CONDITIONS: tuple[Condition, ...] = ("no_rubric", "s0", "s_best", "expert")

GAIN_EPS = 1e-9


@dataclass(frozen=True)
class ConditionResult:
    item_id: str
    condition: Condition
    s0_variant: str | None
    test_qwk: float
    confusion: ConfusionMatrix
    fallback_rate: float
    seed: int
    records: tuple[ScoreRecord, ...]


@dataclass(frozen=True)
class TransferCell:
    source_item_id: str
    target_item_id: str
    test_qwk: float
    relative_gain_vs_s0: float | None
    relative_gain_vs_expert: float | None
    relative_gain_vs_target_best: float | None
    in_distribution: bool


class RubricCache:
    """One rubric generation per (skill text, item), thread-safe."""

    def __init__(self, provider: Provider):
        self.provider = provider
        self._cache: dict[str, str] = {}
        self._lock = threading.Lock()

    def rubric_for(self, skill_text: str, item: Item, version: int) -> Rubric:
        key = hashlib.sha256(f"{skill_text}\x00{item.item_id}".encode("utf-8")).hexdigest()
        with self._lock:
            text = self._cache.get(key)
        if text is None:
            text = self.provider.complete(render_rubric_prompt(skill_text, item))
            with self._lock:
                self._cache.setdefault(key, text)
                text = self._cache[key]
        return Rubric(item_id=item.item_id, text=text,
                      produced_by_skill_version=version, iteration=-1)


@dataclass
class EvalSettings:
    provider: Provider
    fallback_score: int
    seed: int
    parallelism: int = 1
    cache: RubricCache | None = None

    def __post_init__(self):
        if self.cache is None:
            self.cache = RubricCache(self.provider)


def evaluate_condition(
    item: Item,
    test: Sequence[LabeledResponse],
    condition: Condition,
    settings: EvalSettings,
    skill: Skill | None = None,
) -> ConditionResult:
    """Score the test split under one condition and report QWK + confusion.

    s0 and s_best need the corresponding skill; expert needs the item's
    dataset-provided rubric.
    """
    if condition in ("s0", "s_best"):
        if skill is None:
            raise MissingArtifactError(f"condition {condition} needs a skill for item {item.item_id}")
        rubric = settings.cache.rubric_for(compose_skill(skill), item, skill.version)
        prompt_for = lambda r: render_scoring_prompt(rubric, item, r.text)
    elif condition == "expert":
        if not item.expert_rubric:
            raise MissingArtifactError(f"item {item.item_id} has no expert rubric")
        rubric = Rubric(item_id=item.item_id, text=item.expert_rubric,
                        produced_by_skill_version=-1, iteration=-1)
        prompt_for = lambda r: render_scoring_prompt(rubric, item, r.text)
    elif condition == "no_rubric":
        prompt_for = lambda r: render_no_rubric_prompt(item, r.text)
    else:
        raise ValueError(f"unknown condition {condition!r}")

    records = score_responses(settings.provider, test, prompt_for, item.scale,
                              settings.fallback_score, parallelism=settings.parallelism)
    human = [r.human_score for r in test]
    predicted = [rec.predicted_score for rec in records]
    variant = skill.variant_label if skill is not None and condition in ("s0", "s_best") else None
    return ConditionResult(
        item_id=item.item_id,
        condition=condition,
        s0_variant=variant,
        test_qwk=qwk(human, predicted, item.scale),
        confusion=confusion(human, predicted, item.scale),
        fallback_rate=fallback_rate(records),
        seed=settings.seed,
        records=tuple(records),
    )


def relative_gain(new: float, old: float | None) -> float | None:
    if old is None or abs(old) < GAIN_EPS:
        return None
    return (new - old) / abs(old)


def transfer_matrix(
    optimized_runs: dict[str, Skill],
    items: dict[str, Item],
    splits: dict[str, Sequence[LabeledResponse]],
    settings_by_item: dict[str, EvalSettings],
    baseline_results: dict[str, dict[str, ConditionResult]] | None = None,
) -> list[TransferCell]:
    """Apply every source item's optimized skill to every target item's test split.

    splits maps item_id to its test responses. Baselines (target s0, expert,
    own s_best) are taken from baseline_results when supplied, otherwise
    computed here; a degenerate or absent baseline flags that gain
    unavailable but keeps the cell. Diagonal cells reuse the target's own
    s_best result and are flagged in-distribution.
    """
    if set(optimized_runs) != set(items) or set(items) != set(splits):
        raise DataError("optimized_runs, items and splits must cover the same item ids")

    ids = sorted(items)
    baselines: dict[str, dict[str, float | None]] = {}
    best_results: dict[str, ConditionResult] = {}
    for item_id in ids:
        item = items[item_id]
        settings = settings_by_item[item_id]
        skill = optimized_runs[item_id]
        given = (baseline_results or {}).get(item_id, {})

        def result_for(condition: str, use_skill: Skill | None) -> ConditionResult | None:
            if condition in given:
                return given[condition]
            if condition == "expert" and not item.expert_rubric:
                return None
            try:
                return evaluate_condition(item, splits[item_id], condition, settings, skill=use_skill)
            except DegenerateDistributionError:
                return None

        s0_skill = Skill(scaffold=skill.scaffold, delta="",
                         variant_label=skill.variant_label, version=0)
        s0_res = result_for("s0", s0_skill)
        expert_res = result_for("expert", None)
        best_res = result_for("s_best", skill)
        if best_res is None:
            raise DegenerateDistributionError(
                f"own s_best evaluation degenerate for item {item_id}; transfer diagonal undefined"
            )
        best_results[item_id] = best_res
        baselines[item_id] = {
            "s0": s0_res.test_qwk if s0_res else None,
            "expert": expert_res.test_qwk if expert_res else None,
            "best": best_res.test_qwk,
        }

    cells: list[TransferCell] = []
    for source in ids:
        for target in ids:
            if source == target:
                cell_qwk = best_results[target].test_qwk
            else:
                item = items[target]
                settings = settings_by_item[target]
                source_skill = optimized_runs[source]
                rubric = settings.cache.rubric_for(compose_skill(source_skill), item,
                                                   source_skill.version)
                records = score_responses(
                    settings.provider, splits[target],
                    lambda r: render_scoring_prompt(rubric, item, r.text),
                    item.scale, settings.fallback_score,
                    parallelism=settings.parallelism,
                )
                cell_qwk = qwk([r.human_score for r in splits[target]],
                               [rec.predicted_score for rec in records], item.scale)
            base = baselines[target]
            cells.append(TransferCell(
                source_item_id=source,
                target_item_id=target,
                test_qwk=cell_qwk,
                relative_gain_vs_s0=relative_gain(cell_qwk, base["s0"]),
                relative_gain_vs_expert=relative_gain(cell_qwk, base["expert"]),
                relative_gain_vs_target_best=relative_gain(cell_qwk, base["best"]),
                in_distribution=source == target,
            ))
    return cells


def _lower_median(values: list[float]) -> float:
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def aggregate_transfer(grid: Sequence[TransferCell]) -> dict:
    """Off-diagonal aggregates; cells with unavailable gains are skipped in
    the affected statistic. Medians use the lower median on even counts."""
    off = [c for c in grid if not c.in_distribution]
    if not off:
        raise DataError("nothing to aggregate: no off-diagonal transfer cells")
    gains_s0 = [c.relative_gain_vs_s0 for c in off if c.relative_gain_vs_s0 is not None]
    gains_expert = [c.relative_gain_vs_expert for c in off if c.relative_gain_vs_expert is not None]
    gains_best = [c.relative_gain_vs_target_best for c in off
                  if c.relative_gain_vs_target_best is not None]
    return {
        "off_diagonal_cells": len(off),
        "fraction_improving_over_s0": (
            sum(1 for g in gains_s0 if g > 0) / len(gains_s0) if gains_s0 else None
        ),
        "median_relative_gain_vs_s0": _lower_median(gains_s0) if gains_s0 else None,
        "fraction_at_or_above_target_best": (
            sum(1 for g in gains_best if g >= 0) / len(gains_best) if gains_best else None
        ),
        "median_gain_vs_expert": _lower_median(gains_expert) if gains_expert else None,
    }


# --- report emission ---------------------------------------------------------

def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_grid_csv(path: Path, ids: list[str], cell_value) -> None:
    """NxN grid CSV: header = target ids, one row per source (sorted order);
    diagonal cells are left empty to mark in-distribution entries."""
    lines = [",".join(ids)]
    for source in ids:
        row = []
        for target in ids:
            if source == target:
                row.append("")
            else:
                value = cell_value(source, target)
                row.append("" if value is None else f"{value:.6f}")
        lines.append(",".join(row))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def emit_report(
    condition_results: Sequence[ConditionResult],
    out_dir,
    transfer_cells: Sequence[TransferCell] | None = None,
) -> None:
    """Write conditions.csv, per-response record files, transfer grids, and
    summary.json into out_dir, replacing existing files atomically."""
    if not condition_results:
        raise DataError("no condition results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records_dir = out / "records"
    records_dir.mkdir(exist_ok=True)

    rows = ["item_id,condition,s0_variant,seed,test_qwk,fallback_rate"]
    ordered = sorted(condition_results,
                     key=lambda r: (r.item_id, r.condition, r.s0_variant or "", r.seed))
    for res in ordered:
        rows.append(
            f"{res.item_id},{res.condition},{res.s0_variant or ''},{res.seed},"
            f"{res.test_qwk:.6f},{res.fallback_rate:.6f}"
        )
        name = f"{res.item_id}_{res.condition}_{res.s0_variant or 'na'}_seed{res.seed}.jsonl"
        lines = [json.dumps(to_json_dict(rec), ensure_ascii=False) for rec in res.records]
        _atomic_write_text(records_dir / name, "\n".join(lines) + "\n")
    _atomic_write_text(out / "conditions.csv", "\n".join(rows) + "\n")

    summary: dict = {"conditions": _condition_summary(ordered)}
    if transfer_cells:
        ids = sorted({c.target_item_id for c in transfer_cells})
        by_pos = {(c.source_item_id, c.target_item_id): c for c in transfer_cells}
        for metric, attr in (
            ("s0", "relative_gain_vs_s0"),
            ("expert", "relative_gain_vs_expert"),
            ("best", "relative_gain_vs_target_best"),
        ):
            _write_grid_csv(
                out / f"transfer_gain_vs_{metric}.csv", ids,
                lambda s, t, attr=attr: getattr(by_pos[(s, t)], attr),
            )
        summary["transfer"] = aggregate_transfer(transfer_cells)
    with open(out / "summary.json.tmp", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    os.replace(out / "summary.json.tmp", out / "summary.json")


def _condition_summary(results: Sequence[ConditionResult]) -> dict:
    """Mean and population std of test QWK per (item, condition, variant)
    across seeds."""
    groups: dict[tuple, list[float]] = {}
    for res in results:
        groups.setdefault((res.item_id, res.condition, res.s0_variant), []).append(res.test_qwk)
    out: dict = {}
    for (item_id, condition, variant), values in sorted(
        groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2] or "")
    ):
        mean = sum(values) / len(values)
        std = (sum((v - mean) ** 2 for v in values) / len(values)) ** 0.5
        key = f"{item_id}/{condition}" + (f"/{variant}" if variant else "")
        out[key] = {"mean_qwk": mean, "std_qwk": std, "n_seeds": len(values)}
    return out
