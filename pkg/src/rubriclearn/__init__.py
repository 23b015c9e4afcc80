"""rubriclearn: learn rubric-construction skills for LLM-based short-answer scoring.

The package wraps an iterative optimize-diagnose-gate loop: a skill (fixed
scaffold + learned augmentation) generates an item rubric, the rubric scores
a training batch, mis-scored cases are diagnosed into a revised augmentation,
and a validation gatekeeper accepts the revision only on strict QWK
improvement. Evaluation covers four scoring conditions and cross-item
transfer.
"""

from .core import (
    DELTA_HEADER,
    Item,
    LabeledResponse,
    Rubric,
    ScoreRecord,
    ScoreScale,
    Skill,
    compose_skill,
    split_composed_skill,
)
from .dataset import (
    BatchPlan,
    DatasetSplit,
    SplitSpec,
    load_dataset,
    make_batches,
    stratified_split,
)
from .evaluation import (
    ConditionResult,
    TransferCell,
    aggregate_transfer,
    emit_report,
    evaluate_condition,
    transfer_matrix,
)
from .metrics import ConfusionMatrix, ErrorStats, confusion, error_stats, qwk
from .optimizer import (
    IterationRecord,
    RunContext,
    RunState,
    content_leak_check,
    init_run,
    resume_run,
    run_iteration,
    run_loop,
)

__version__ = "0.1.0"

__all__ = [
    "BatchPlan",
    "ConditionResult",
    "ConfusionMatrix",
    "DELTA_HEADER",
    "DatasetSplit",
    "ErrorStats",
    "Item",
    "IterationRecord",
    "LabeledResponse",
    "Rubric",
    "RunContext",
    "RunState",
    "ScoreRecord",
    "ScoreScale",
    "Skill",
    "SplitSpec",
    "TransferCell",
    "aggregate_transfer",
    "compose_skill",
    "confusion",
    "content_leak_check",
    "emit_report",
    "error_stats",
    "evaluate_condition",
    "init_run",
    "load_dataset",
    "make_batches",
    "qwk",
    "resume_run",
    "run_iteration",
    "run_loop",
    "split_composed_skill",
    "stratified_split",
    "transfer_matrix",
]
