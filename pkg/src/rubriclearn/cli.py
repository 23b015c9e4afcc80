"""Command-line entry points: ingest, optimize, evaluate, inspect.

Configuration lives in a JSON file; command-line flags override the listed
fields. Secrets never enter the config: provider API keys are read from the
environment variable the config names. The scorer always decodes greedily
(temperature 0 is pinned in the prompt renderers and is not configurable).

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 provider error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .core import Item, LabeledResponse, Skill
from .dataset import (
    SplitSpec,
    derive_seed,
    load_dataset,
    make_batches,
    manifest_content_hash,
    split_manifest,
    stratified_split,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    MissingArtifactError,
    ProviderError,
    RubricLearnError,
)
from .evaluation import (
    CONDITIONS,
    ConditionResult,
    EvalSettings,
    RubricCache,
    emit_report,
    evaluate_condition,
    transfer_matrix,
)
from .llm.mock import MockProvider, MockScript
from .llm.provider import CallBudget, FailureInjector, HttpProvider, Provider, ProviderConfig
from .llm.scoring import modal_score
from .llm.templates import load_scaffold
from .optimizer import RunContext, RunPaths, init_run, resume_run, run_loop

logger = logging.getLogger(__name__)

FAIL_AFTER_CALLS_ENV = "RUBRICLEARN_FAIL_AFTER_CALLS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PROVIDER = 4


@dataclass
class RunConfig:
    dataset_path: str
    item_ids: list[str]
    out_root: str
    s0_variants: list[str] = field(default_factory=lambda: ["weak"])
    seeds: list[int] = field(default_factory=lambda: [42])
    rater_choice: str = "score1"
    items_meta_path: str | None = None
    scaffold_file: str | None = None
    train_fraction: float = 0.65
    val_fraction: float = 0.15
    test_fraction: float = 0.20
    batch_target: int = 100
    patience: int = 3
    diagnosis_token_budget: int = 12000
    scorer: ProviderConfig | None = None
    diagnoser: ProviderConfig | None = None
    mock_script_path: str | None = None

    def __post_init__(self):
        if not self.item_ids:
            raise ConfigError("config needs at least one item id")
        if not self.seeds:
            raise ConfigError("config needs at least one seed")
        if not self.s0_variants:
            raise ConfigError("config needs at least one scaffold variant")
        for v in self.s0_variants:
            if v not in ("weak", "medium", "strong", "custom"):
                raise ConfigError(f"unknown scaffold variant {v!r}")
        if "custom" in self.s0_variants and not self.scaffold_file:
            raise ConfigError("variant 'custom' requires scaffold_file")
        if self.mock_script_path is None and (self.scorer is None or self.diagnoser is None):
            raise ConfigError("scorer and diagnoser provider configs required unless a mock script is set")

    def split_spec(self, seed: int) -> SplitSpec:
        return SplitSpec(self.train_fraction, self.val_fraction, self.test_fraction, seed)

    def scaffold_text(self, variant: str) -> str:
        if variant == "custom":
            return Path(self.scaffold_file).read_text(encoding="utf-8").rstrip("\n")
        return load_scaffold(variant)

    def snapshot(self, **extra) -> dict:
        d = dataclasses.asdict(self)
        d.update(extra)
        return d


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    for role in ("scorer", "diagnoser"):
        if isinstance(raw.get(role), dict):
            try:
                raw[role] = ProviderConfig(**raw[role])
            except TypeError as exc:
                raise ConfigError(f"bad {role} provider config: {exc}") from exc
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return RunConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _build_providers(config: RunConfig) -> tuple[Provider, Provider]:
    if config.mock_script_path:
        mock = MockProvider(MockScript.from_file(config.mock_script_path))
        scorer: Provider = mock
        diagnoser: Provider = mock
    else:
        scorer = HttpProvider(config.scorer)
        diagnoser = HttpProvider(config.diagnoser)
    budget_raw = os.environ.get(FAIL_AFTER_CALLS_ENV)
    if budget_raw:
        budget = CallBudget(int(budget_raw))
        scorer = FailureInjector(scorer, budget)
        diagnoser = FailureInjector(diagnoser, budget) if diagnoser is not scorer else scorer
        logger.warning("failure injection active: providers fail after %s calls", budget_raw)
    return scorer, diagnoser


def _load_items(config: RunConfig) -> dict[str, tuple[Item, list[LabeledResponse]]]:
    items_meta = None
    if config.items_meta_path:
        items_meta = json.loads(Path(config.items_meta_path).read_text(encoding="utf-8"))
    data = load_dataset(config.dataset_path, config.rater_choice, items_meta=items_meta)
    missing = [i for i in config.item_ids if i not in data]
    if missing:
        raise DataError(f"item ids not in dataset: {missing}")
    return {i: data[i] for i in config.item_ids}


def _run_dir(config: RunConfig, item_id: str, variant: str, seed: int) -> Path:
    return Path(config.out_root) / "runs" / f"item_{item_id}" / variant / f"seed_{seed}"


def cmd_ingest(config: RunConfig) -> int:
    data = _load_items(config)
    for item_id, (_, responses) in data.items():
        for seed in config.seeds:
            spec = config.split_spec(seed)
            split = stratified_split(responses, spec)
            plan = make_batches(len(split.train), config.batch_target,
                                derive_seed(seed, item_id, "batches"))
            manifest = split_manifest(item_id, spec, split, plan)
            out = Path(config.out_root) / "ingest" / f"item_{item_id}" / f"seed_{seed}"
            out.mkdir(parents=True, exist_ok=True)
            path = out / "split.json"
            path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n",
                            encoding="utf-8")
            print(f"wrote {path} (hash {manifest_content_hash(manifest)[:12]})")
    return EXIT_OK


def _make_context(config: RunConfig, item: Item, responses: list[LabeledResponse],
                  seed: int, run_dir: Path, scorer: Provider, diagnoser: Provider) -> RunContext:
    split = stratified_split(responses, config.split_spec(seed))
    plan = make_batches(len(split.train), config.batch_target,
                        derive_seed(seed, item.item_id, "batches"))
    parallelism = config.scorer.parallelism if config.scorer else 1
    return RunContext(
        item=item,
        split=split,
        plan=plan,
        run_dir=run_dir,
        scorer=scorer,
        diagnoser=diagnoser,
        scorer_parallelism=parallelism,
        patience=config.patience,
        diagnosis_token_budget=config.diagnosis_token_budget,
    )


def cmd_optimize(config: RunConfig, resume: bool = False) -> int:
    data = _load_items(config)
    scorer, diagnoser = _build_providers(config)
    for item_id, (item, responses) in data.items():
        for variant in config.s0_variants:
            for seed in config.seeds:
                run_dir = _run_dir(config, item_id, variant, seed)
                snapshot = config.snapshot(item_id=item_id, variant=variant, seed=seed)
                deps = _make_context(config, item, responses, seed, run_dir, scorer, diagnoser)
                paths = RunPaths(run_dir)
                if resume and paths.summary.exists():
                    print(f"{run_dir}: already complete; nothing to do")
                    continue
                if resume and paths.checkpoints.exists() and any(paths.checkpoints.iterdir()):
                    state = resume_run(run_dir, current_config_snapshot=snapshot)
                    print(f"{run_dir}: resuming from iteration {state.iteration}")
                else:
                    for stale in (paths.checkpoints, paths.skills, paths.rubrics, paths.reports):
                        shutil.rmtree(stale, ignore_errors=True)
                    paths.summary.unlink(missing_ok=True)
                    state = init_run(item, deps.split, deps.plan,
                                     config.scaffold_text(variant), variant,
                                     deps, seed, snapshot)
                state = run_loop(state, deps)
                summary = json.loads(paths.summary.read_text(encoding="utf-8"))
                print(f"{run_dir}: {summary['termination_reason']} after "
                      f"{summary['iterations']} iterations, best val QWK "
                      f"{summary['final_qwk_best_val']:.4f} (v{summary['accepted_version_count']})")
    return EXIT_OK


def _best_skill(run_dir: Path) -> Skill:
    paths = RunPaths(run_dir)
    if not paths.summary.exists():
        raise MissingArtifactError(f"optimization incomplete: {paths.summary} missing")
    return resume_run(run_dir).skill_best


def cmd_evaluate(config: RunConfig) -> int:
    data = _load_items(config)
    scorer, _ = _build_providers(config)
    cache = RubricCache(scorer)
    parallelism = config.scorer.parallelism if config.scorer else 1

    # no_rubric and expert do not depend on the scaffold variant; evaluate
    # once per (item, seed) and reuse across variant reports.
    shared: dict[tuple[str, int, str], ConditionResult] = {}

    for variant in config.s0_variants:
        results: list[ConditionResult] = []
        transfer_cells = None
        skills_first_seed: dict[str, Skill] = {}
        settings_first_seed: dict[str, EvalSettings] = {}
        splits_first_seed: dict[str, list[LabeledResponse]] = {}
        baselines_first_seed: dict[str, dict[str, ConditionResult]] = {}

        for seed in config.seeds:
            for item_id, (item, responses) in data.items():
                split = stratified_split(responses, config.split_spec(seed))
                settings = EvalSettings(
                    provider=scorer,
                    fallback_score=modal_score(split.train),
                    seed=seed,
                    parallelism=parallelism,
                    cache=cache,
                )
                best = _best_skill(_run_dir(config, item_id, variant, seed))
                s0_skill = Skill(scaffold=best.scaffold, delta="",
                                 variant_label=best.variant_label, version=0)
                per_item: dict[str, ConditionResult] = {}
                for condition in CONDITIONS:
                    key = (item_id, seed, condition)
                    if condition in ("no_rubric", "expert") and key in shared:
                        res = shared[key]
                    else:
                        skill = {"s0": s0_skill, "s_best": best}.get(condition)
                        res = evaluate_condition(item, split.test, condition, settings, skill=skill)
                        if condition in ("no_rubric", "expert"):
                            shared[key] = res
                    per_item[condition] = res
                    results.append(res)
                if seed == config.seeds[0]:
                    skills_first_seed[item_id] = best
                    settings_first_seed[item_id] = settings
                    splits_first_seed[item_id] = list(split.test)
                    baselines_first_seed[item_id] = per_item

        if len(config.item_ids) >= 2:
            transfer_cells = transfer_matrix(
                skills_first_seed,
                {i: data[i][0] for i in config.item_ids},
                splits_first_seed,
                settings_first_seed,
                baseline_results=baselines_first_seed,
            )
        out_dir = Path(config.out_root) / "eval" / variant
        emit_report(results, out_dir, transfer_cells=transfer_cells)
        print(f"wrote evaluation report to {out_dir}")
    return EXIT_OK


def cmd_inspect(run_dir: str) -> int:
    state = resume_run(run_dir)
    manifest = json.loads((Path(run_dir) / "manifest.json").read_text(encoding="utf-8"))
    snap = manifest.get("config_snapshot", {})
    print(f"Run: {run_dir}")
    print(f"item {state.item_id}  variant {snap.get('variant', '?')}  seed {state.rng_seed}")
    print(f"{'iter':>4}  {'batch':>5}  {'batch_qwk':>9}  {'cand_val_qwk':>12}  "
          f"{'accepted':>8}  {'leak':>4}  {'fallback':>8}")
    for rec in state.history:
        batch_qwk = f"{rec.batch_qwk:.4f}" if rec.batch_qwk is not None else "degen"
        cand = f"{rec.candidate_val_qwk:.4f}" if rec.candidate_val_qwk is not None else "-"
        leak = str(len(rec.leak_violations)) if rec.leak_violations else "-"
        print(f"{rec.iteration:>4}  {rec.batch_index:>5}  {batch_qwk:>9}  {cand:>12}  "
              f"{'yes' if rec.accepted else 'no':>8}  {leak:>4}  {rec.fallback_rate:>8.2f}")
    print(f"Best skill: v{state.skill_best.version}, val QWK {state.qwk_best_val:.4f}")
    if state.skill_best.delta:
        print("Augmentation:")
        print(state.skill_best.delta)
    else:
        print("Augmentation: (empty)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rubriclearn",
        description="Learn rubric-construction skills for LLM-based short-answer scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", required=True, help="path to JSON config")
        p.add_argument("--items", help="comma-separated item ids (overrides config)")
        p.add_argument("--seeds", help="comma-separated seeds (overrides config)")
        p.add_argument("--variant", choices=["weak", "medium", "strong"],
                       help="single scaffold variant (overrides config)")
        p.add_argument("--mock-script", help="mock provider script path (activates the mock)")
        p.add_argument("--out", help="output root directory (overrides config)")

    add_config_flags(sub.add_parser("ingest", help="split and batch the dataset"))
    p_opt = sub.add_parser("optimize", help="run the iterative skill optimization")
    add_config_flags(p_opt)
    p_opt.add_argument("--resume", action="store_true", help="continue from checkpoints")
    add_config_flags(sub.add_parser("evaluate", help="four-condition evaluation and transfer"))
    p_ins = sub.add_parser("inspect", help="print a readable narrative for one run")
    p_ins.add_argument("run_dir", help="run directory to inspect")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    out: dict = {}
    if getattr(args, "items", None):
        out["item_ids"] = [s.strip() for s in args.items.split(",") if s.strip()]
    if getattr(args, "seeds", None):
        out["seeds"] = [int(s) for s in args.seeds.split(",") if s.strip()]
    if getattr(args, "variant", None):
        out["s0_variants"] = [args.variant]
    if getattr(args, "mock_script", None):
        out["mock_script_path"] = args.mock_script
    if getattr(args, "out", None):
        out["out_root"] = args.out
    return out


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "inspect":
            return cmd_inspect(args.run_dir)
        config = load_config(args.config, overrides=_overrides(args))
        if args.command == "ingest":
            return cmd_ingest(config)
        if args.command == "optimize":
            return cmd_optimize(config, resume=args.resume)
        if args.command == "evaluate":
            return cmd_evaluate(config)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError, MissingArtifactError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except RubricLearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
