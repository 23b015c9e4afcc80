"""Iterative skill refinement: generate, score, evaluate, diagnose, gate.

Each iteration consumes one training batch, turns its mis-scored cases into
a diagnosis request, and accepts the proposed augmentation only on strict
validation-QWK improvement. Three consecutive rejections (configurable
patience) stop the run early; otherwise it ends with the batches.

State is checkpointed atomically (write-to-temp, rename) after every
iteration, so a transport failure mid-iteration leaves the run resumable
from the last committed iteration.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .core import (
    DELTA_HEADER,
    Item,
    Rubric,
    Skill,
    compose_skill,
    rubric_from_dict,
    skill_from_dict,
    to_json_dict,
)
from .dataset import PRNG_NAME, BatchPlan, DatasetSplit
from .errors import CheckpointError, ConfigDriftError, DegenerateDistributionError
from .llm.parsing import extract_delta
from .llm.prompts import render_diagnosis_prompt, render_rubric_prompt, render_scoring_prompt
from .llm.provider import Provider
from .llm.scoring import fallback_rate, modal_score, score_responses
from .llm.templates import asset_checksums
from .metrics import ErrorStats, error_stats, error_stats_from_dict, qwk

logger = logging.getLogger(__name__)

DEFAULT_PATIENCE = 3

# Assessment/procedural vocabulary that never counts as item content.
LEAK_WHITELIST = frozenset("""
accuracy accurate answer answers assess assessed assesses assessment based
complete correct correctly criteria criterion describe described describes
describing description detail details element elements evidence example
examples explain explained explaining explains explanation explanations
following general grade graded grades grading identified identifies identify
include included includes including incomplete incorrect information level
levels mention mentioned mentions partial partially point points provide
provided provides question questions reason reasoning reasons response
responses rubric rubrics score scored scores scoring specific statement
statements student students support supported supports tasks understand
understanding write writes writing written knowledge concept concepts
""".split())

STOPWORDS = frozenset("""
about above after again against almost along already although always among
another anything around because before being below beside besides between
beyond cannot could doing during either enough every everything further
having hence herself himself itself least maybe might moreover mostly
neither never often other others otherwise ought perhaps quite rather really
shall should since something sometimes their theirs themselves there
therefore these thing things those though through throughout together toward
towards under unless until using usually wants whatever whenever where
whereas wherever whether which while whole whose within without would yours
yourself according
""".split())


def content_leak_check(delta: str, item: Item) -> list[str]:
    """Item-stem content terms that leak into a proposed augmentation.

    Candidate terms are lowercase alphabetic stem tokens of length >= 5 minus
    the procedural whitelist and stopwords; a term violates when it appears
    case-insensitively as a whole word in the delta. Returned sorted.
    """
    tokens = {t.lower() for t in re.findall(r"[A-Za-z]+", item.stem_text) if len(t) >= 5}
    candidates = tokens - LEAK_WHITELIST - STOPWORDS
    violations = []
    for term in sorted(candidates):
        if re.search(rf"\b{re.escape(term)}\b", delta, re.IGNORECASE):
            violations.append(term)
    return violations


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    batch_index: int
    rubric: Rubric
    batch_qwk: float | None
    stats: ErrorStats
    candidate_delta: str
    candidate_val_qwk: float | None
    accepted: bool
    leak_violations: tuple[str, ...]
    fallback_rate: float

    def to_json_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "batch_index": self.batch_index,
            "rubric": to_json_dict(self.rubric),
            "batch_qwk": self.batch_qwk,
            "stats": self.stats.to_json_dict(),
            "candidate_delta": self.candidate_delta,
            "candidate_val_qwk": self.candidate_val_qwk,
            "accepted": self.accepted,
            "leak_violations": list(self.leak_violations),
            "fallback_rate": self.fallback_rate,
        }


def iteration_record_from_dict(d: dict) -> IterationRecord:
    return IterationRecord(
        iteration=d["iteration"],
        batch_index=d["batch_index"],
        rubric=rubric_from_dict(d["rubric"]),
        batch_qwk=d["batch_qwk"],
        stats=error_stats_from_dict(d["stats"]),
        candidate_delta=d["candidate_delta"],
        candidate_val_qwk=d["candidate_val_qwk"],
        accepted=d["accepted"],
        leak_violations=tuple(d["leak_violations"]),
        fallback_rate=d["fallback_rate"],
    )


@dataclass(frozen=True)
class RunState:
    item_id: str
    skill_best: Skill
    qwk_best_val: float
    failure_counter: int
    batch_cursor: int
    iteration: int
    history: tuple[IterationRecord, ...]
    rng_seed: int
    config_snapshot: dict

    def to_json_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "skill_best": to_json_dict(self.skill_best),
            "qwk_best_val": self.qwk_best_val,
            "failure_counter": self.failure_counter,
            "batch_cursor": self.batch_cursor,
            "iteration": self.iteration,
            "history": [r.to_json_dict() for r in self.history],
            "rng_seed": self.rng_seed,
            "config_snapshot": self.config_snapshot,
        }


def run_state_from_dict(d: dict) -> RunState:
    return RunState(
        item_id=d["item_id"],
        skill_best=skill_from_dict(d["skill_best"]),
        qwk_best_val=d["qwk_best_val"],
        failure_counter=d["failure_counter"],
        batch_cursor=d["batch_cursor"],
        iteration=d["iteration"],
        history=tuple(iteration_record_from_dict(r) for r in d["history"]),
        rng_seed=d["rng_seed"],
        config_snapshot=d["config_snapshot"],
    )


@dataclass
class RunContext:
    """Everything an iteration needs besides the state itself."""

    item: Item
    split: DatasetSplit
    plan: BatchPlan
    run_dir: Path
    scorer: Provider
    diagnoser: Provider
    scorer_parallelism: int = 1
    patience: int = DEFAULT_PATIENCE
    diagnosis_token_budget: int = 12000
    fallback_score: int = field(init=False)

    def __post_init__(self):
        self.run_dir = Path(self.run_dir)
        self.fallback_score = modal_score(self.split.train)


def config_hash(snapshot: dict) -> str:
    return hashlib.sha256(
        json.dumps(snapshot, sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


RUN_DIR_README = """\
# Run directory layout

- `manifest.json` - config snapshot and hash, seeds, template asset
  checksums, PRNG name ("{prng}").
- `checkpoints/iter_NNN.json` - full optimizer state after iteration NNN
  (iter_000 is the post-initialization state). Fields: item_id, skill_best
  (scaffold, delta, variant_label, version), qwk_best_val, failure_counter,
  batch_cursor, iteration, history (list of iteration records), rng_seed,
  config_snapshot.
- `skills/vK.txt` - composed skill text for accepted version K (v0 is the
  scaffold).
- `rubrics/iter_NNN.txt` - the rubric generated from the incumbent skill at
  iteration NNN (iter_000 is the initial validation rubric).
- `reports/iter_NNN.json` - iteration record: iteration, batch_index, rubric,
  batch_qwk (null when degenerate), stats (accuracy, over/under/exact counts,
  per_pair list sorted by count, error_indices), candidate_delta,
  candidate_val_qwk (null when no candidate was formed or validation was
  degenerate), accepted, leak_violations, fallback_rate.
- `summary.json` - termination_reason (early_stop | batches_exhausted),
  iterations, accepted_version_count, final_qwk_best_val.

Persistence conventions: line-delimited or plain JSON, snake_case fields.
Scores are integers; score scales embed as {{"min_score": ..., "max_score":
...}}. No timestamps are written, so identical runs produce byte-identical
artifacts.
""".format(prng=PRNG_NAME)


class RunPaths:
    def __init__(self, run_dir: Path):
        self.root = Path(run_dir)
        self.manifest = self.root / "manifest.json"
        self.summary = self.root / "summary.json"
        self.checkpoints = self.root / "checkpoints"
        self.skills = self.root / "skills"
        self.rubrics = self.root / "rubrics"
        self.reports = self.root / "reports"

    def prepare(self) -> None:
        for d in (self.root, self.checkpoints, self.skills, self.rubrics, self.reports):
            d.mkdir(parents=True, exist_ok=True)

    def checkpoint(self, iteration: int) -> Path:
        return self.checkpoints / f"iter_{iteration:03d}.json"

    def rubric(self, iteration: int) -> Path:
        return self.rubrics / f"iter_{iteration:03d}.txt"

    def report(self, iteration: int) -> Path:
        return self.reports / f"iter_{iteration:03d}.json"

    def skill(self, version: int) -> Path:
        return self.skills / f"v{version}.txt"


def _generate_rubric(deps: RunContext, skill_text: str, version: int, iteration: int) -> Rubric:
    text = deps.scorer.complete(render_rubric_prompt(skill_text, deps.item))
    return Rubric(
        item_id=deps.item.item_id,
        text=text,
        produced_by_skill_version=version,
        iteration=iteration,
    )


def _score_part(deps: RunContext, rubric: Rubric, responses) -> list:
    return score_responses(
        deps.scorer,
        responses,
        lambda r: render_scoring_prompt(rubric, deps.item, r.text),
        deps.item.scale,
        deps.fallback_score,
        parallelism=deps.scorer_parallelism,
    )


def _val_qwk(deps: RunContext, rubric: Rubric) -> float:
    records = _score_part(deps, rubric, deps.split.val)
    human = [r.human_score for r in deps.split.val]
    predicted = [rec.predicted_score for rec in records]
    return qwk(human, predicted, deps.item.scale)


def init_run(
    item: Item,
    split: DatasetSplit,
    plan: BatchPlan,
    scaffold: str,
    variant_label: str,
    deps: RunContext,
    rng_seed: int,
    config_snapshot: dict,
) -> RunState:
    """Establish the reference validation QWK for the bare scaffold and
    checkpoint the initial state before any iteration runs."""
    paths = RunPaths(deps.run_dir)
    paths.prepare()

    skill0 = Skill(scaffold=scaffold, delta="", variant_label=variant_label, version=0)
    rubric0 = _generate_rubric(deps, compose_skill(skill0), version=0, iteration=0)
    try:
        qwk0 = _val_qwk(deps, rubric0)
    except DegenerateDistributionError as exc:
        raise DegenerateDistributionError(
            f"initial validation pass degenerate for item {item.item_id}: {exc}; "
            "validation split unusable"
        ) from exc

    state = RunState(
        item_id=item.item_id,
        skill_best=skill0,
        qwk_best_val=qwk0,
        failure_counter=0,
        batch_cursor=0,
        iteration=0,
        history=(),
        rng_seed=rng_seed,
        config_snapshot=config_snapshot,
    )
    _write_json(paths.manifest, {
        "config_snapshot": config_snapshot,
        "config_hash": config_hash(config_snapshot),
        "template_checksums": asset_checksums(),
        "prng": PRNG_NAME,
        "rng_seed": rng_seed,
    })
    _atomic_write(paths.root / "README.md", RUN_DIR_README)
    _atomic_write(paths.skill(0), compose_skill(skill0))
    _atomic_write(paths.rubric(0), rubric0.text)
    _write_json(paths.checkpoint(0), state.to_json_dict())
    return state


def _estimate_tokens(text: str) -> int:
    # Crude 4-chars-per-token heuristic; only used for the truncation budget.
    return len(text) // 4 + 1


def _diagnosis_request(deps: RunContext, skill_text: str, rubric: Rubric,
                       stats: ErrorStats, cases: list[tuple[str, int, int, str]]):
    """Render the diagnosis prompt, truncating cases to the token budget.

    When truncation is needed, cases are kept (and rendered) in order of
    |human - predicted| descending, then input order."""
    request = render_diagnosis_prompt(skill_text, rubric.text, stats, cases)
    if _estimate_tokens(request.text) <= deps.diagnosis_token_budget:
        return request
    ranked = sorted(
        range(len(cases)), key=lambda i: (-abs(cases[i][2] - cases[i][1]), i)
    )
    kept = [cases[i] for i in ranked]
    while len(kept) > 1:
        kept.pop()
        request = render_diagnosis_prompt(skill_text, rubric.text, stats, kept)
        if _estimate_tokens(request.text) <= deps.diagnosis_token_budget:
            break
    logger.info("diagnosis prompt truncated to %d of %d error cases", len(kept), len(cases))
    return request


def _check_delta(delta: str, item: Item) -> list[str]:
    violations = content_leak_check(delta, item)
    if DELTA_HEADER in delta:
        violations = violations + [DELTA_HEADER]
    return violations


def _persist_iteration(paths: RunPaths, state: RunState, record: IterationRecord) -> None:
    _atomic_write(paths.rubric(record.iteration), record.rubric.text)
    _write_json(paths.report(record.iteration), record.to_json_dict())
    _write_json(paths.checkpoint(record.iteration), state.to_json_dict())


def run_iteration(state: RunState, deps: RunContext) -> RunState:
    """Execute one optimize-diagnose-gate iteration and checkpoint it.

    Provider failures propagate before anything is persisted, so the on-disk
    state stays at the previous checkpoint and the iteration re-executes from
    its start on resume.
    """
    if state.batch_cursor >= len(deps.plan.batches):
        raise ValueError("no batches left to consume")
    if state.failure_counter >= deps.patience:
        raise ValueError("patience already exhausted")

    paths = RunPaths(deps.run_dir)
    item = deps.item
    iteration = state.iteration + 1
    batch_index = state.batch_cursor
    skill_text = compose_skill(state.skill_best)

    rubric = _generate_rubric(deps, skill_text, state.skill_best.version, iteration)
    batch = [deps.split.train[i] for i in deps.plan.batches[batch_index]]
    records = _score_part(deps, rubric, batch)
    frate = fallback_rate(records)

    paired = list(zip(batch, records))
    stats = error_stats(paired, item.scale)
    try:
        batch_qwk = qwk(
            [r.human_score for r in batch],
            [rec.predicted_score for rec in records],
            item.scale,
        )
    except DegenerateDistributionError:
        batch_qwk = None

    def finish(candidate_delta: str, candidate_val_qwk: float | None,
               accepted: bool, leak_violations: list[str], new_best: Skill,
               new_qwk: float, counter: int) -> RunState:
        record = IterationRecord(
            iteration=iteration,
            batch_index=batch_index,
            rubric=rubric,
            batch_qwk=batch_qwk,
            stats=stats,
            candidate_delta=candidate_delta,
            candidate_val_qwk=candidate_val_qwk,
            accepted=accepted,
            leak_violations=tuple(leak_violations),
            fallback_rate=frate,
        )
        new_state = dataclasses.replace(
            state,
            skill_best=new_best,
            qwk_best_val=new_qwk,
            failure_counter=counter,
            batch_cursor=batch_index + 1,
            iteration=iteration,
            history=state.history + (record,),
        )
        if accepted:
            _atomic_write(paths.skill(new_best.version), compose_skill(new_best))
        _persist_iteration(paths, new_state, record)
        return new_state

    errors = [(resp, rec) for resp, rec in paired
              if rec.predicted_score != resp.human_score]
    if not errors:
        # No improvement signal; counts toward patience so easy batches
        # cannot idle the run forever.
        logger.info("iteration %d: zero-error batch, counted as rejection", iteration)
        return finish("", None, False, [], state.skill_best, state.qwk_best_val,
                      state.failure_counter + 1)

    cases = [(resp.text, rec.predicted_score, resp.human_score, rec.justification)
             for resp, rec in errors]
    request = _diagnosis_request(deps, skill_text, rubric, stats, cases)
    delta, _ = extract_delta(deps.diagnoser.complete(request))
    violations = _check_delta(delta, item)
    if violations:
        logger.info("iteration %d: content violations %s; re-prompting once", iteration, violations)
        reminder = (
            f"{request.text}\n\nCONSTRAINT REMINDER: the previous revision mentioned "
            f"item-specific terms: {', '.join(violations)}. The augmentation must not "
            f"mention any topic or content from this specific item.\n\n"
            "UPDATED AUGMENTATION:"
        )
        retry_request = dataclasses.replace(request, messages=(("user", reminder),))
        delta, _ = extract_delta(deps.diagnoser.complete(retry_request))
        violations = _check_delta(delta, item)
        if violations:
            logger.info("iteration %d: persistent violations %s; rejected", iteration, violations)
            return finish(delta, None, False, violations, state.skill_best,
                          state.qwk_best_val, state.failure_counter + 1)

    candidate = Skill(
        scaffold=state.skill_best.scaffold,
        delta=delta,
        variant_label=state.skill_best.variant_label,
        version=state.skill_best.version + 1,
    )
    cand_rubric = _generate_rubric(deps, compose_skill(candidate), candidate.version, iteration)
    try:
        cand_qwk = _val_qwk(deps, cand_rubric)
    except DegenerateDistributionError as exc:
        logger.info("iteration %d: candidate validation degenerate (%s); rejected", iteration, exc)
        return finish(delta, None, False, [], state.skill_best, state.qwk_best_val,
                      state.failure_counter + 1)

    if cand_qwk > state.qwk_best_val:
        logger.info("iteration %d: accepted v%d (val QWK %.4f > %.4f)",
                    iteration, candidate.version, cand_qwk, state.qwk_best_val)
        return finish(delta, cand_qwk, True, [], candidate, cand_qwk, 0)
    logger.info("iteration %d: rejected (val QWK %.4f <= %.4f)",
                iteration, cand_qwk, state.qwk_best_val)
    return finish(delta, cand_qwk, False, [], state.skill_best, state.qwk_best_val,
                  state.failure_counter + 1)


def run_loop(state: RunState, deps: RunContext) -> RunState:
    """Iterate until the batches run out or patience is exhausted; write summary."""
    while state.failure_counter < deps.patience and state.batch_cursor < len(deps.plan.batches):
        state = run_iteration(state, deps)
    reason = "early_stop" if state.failure_counter >= deps.patience else "batches_exhausted"
    summary = {
        "item_id": state.item_id,
        "termination_reason": reason,
        "iterations": state.iteration,
        "accepted_version_count": state.skill_best.version,
        "final_qwk_best_val": state.qwk_best_val,
        "rng_seed": state.rng_seed,
    }
    _write_json(RunPaths(deps.run_dir).summary, summary)
    logger.info("run complete: %s after %d iterations, best val QWK %.4f (v%d)",
                reason, state.iteration, state.qwk_best_val, state.skill_best.version)
    return state


def resume_run(run_dir, current_config_snapshot: dict | None = None) -> RunState:
    """Reconstruct the state from the latest atomic checkpoint.

    With a config snapshot supplied, its hash must match the manifest's or
    the resume is refused (config drift)."""
    paths = RunPaths(Path(run_dir))
    if not paths.manifest.exists():
        raise CheckpointError(f"no manifest.json in {run_dir}; found: "
                              f"{sorted(p.name for p in Path(run_dir).glob('*')) if Path(run_dir).exists() else 'missing directory'}")
    manifest = json.loads(paths.manifest.read_text(encoding="utf-8"))
    checkpoints = sorted(paths.checkpoints.glob("iter_*.json"))
    if not checkpoints:
        raise CheckpointError(
            f"no checkpoints in {paths.checkpoints}; found: "
            f"{sorted(p.name for p in paths.root.glob('**/*') if p.is_file())}"
        )
    latest = checkpoints[-1]
    try:
        state = run_state_from_dict(json.loads(latest.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError) as exc:
        raise CheckpointError(f"corrupt checkpoint {latest}: {exc}") from exc
    if current_config_snapshot is not None:
        if config_hash(current_config_snapshot) != manifest["config_hash"]:
            raise ConfigDriftError(
                f"config drift: supplied config hash {config_hash(current_config_snapshot)[:12]} "
                f"does not match run manifest {manifest['config_hash'][:12]}"
            )
    return state
