"""ASAP-SAS ingestion, stratified splitting, and training-batch planning.

All three operations are pure functions of (inputs, seed). The PRNG is
numpy's PCG64, recorded in manifests as "numpy-PCG64" so splits reproduce
across machines.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .core import Item, LabeledResponse, ScoreScale, check_reserved_header
from .errors import IngestionError, SplitError

PRNG_NAME = "numpy-PCG64"

EXPECTED_COLUMNS = ["Id", "EssaySet", "Score1", "Score2", "EssayText"]

# ASAP-SAS score ranges: essay sets 1, 2, 5, 6 run 0-3; the rest 0-2.
DEFAULT_SCALE_MAP: dict[str, ScoreScale] = {
    **{s: ScoreScale(0, 3) for s in ("1", "2", "5", "6")},
    **{s: ScoreScale(0, 2) for s in ("3", "4", "7", "8", "9", "10")},
}

RaterChoice = Literal["score1", "score2"]


@dataclass(frozen=True)
class SplitSpec:
    """Fractions and seed for a stratified train/val/test split."""

    train_fraction: float = 0.65
    val_fraction: float = 0.15
    test_fraction: float = 0.20
    seed: int = 42

    def __post_init__(self):
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(not (0.0 < f < 1.0) for f in fracs):
            raise ValueError("fractions must each be in (0, 1)")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError("fractions must sum to 1")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.train_fraction, self.val_fraction, self.test_fraction)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[LabeledResponse, ...]
    val: tuple[LabeledResponse, ...]
    test: tuple[LabeledResponse, ...]

    @property
    def parts(self) -> dict[str, tuple[LabeledResponse, ...]]:
        return {"train": self.train, "val": self.val, "test": self.test}


@dataclass(frozen=True)
class BatchPlan:
    """Non-overlapping index lists into the train part, covering it exactly."""

    batches: tuple[tuple[int, ...], ...]
    target_batch_size: int


def derive_seed(*parts) -> int:
    """Stable 64-bit sub-seed from heterogeneous parts (sha256-based)."""
    key = ":".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def load_dataset(
    path,
    rater_choice: RaterChoice = "score1",
    items_meta: dict[str, dict] | None = None,
    scale_overrides: dict[str, ScoreScale] | None = None,
) -> dict[str, tuple[Item, list[LabeledResponse]]]:
    """Parse an ASAP-SAS-format TSV into items and labeled responses.

    The raw format is strict: UTF-8, header row with columns
    Id/EssaySet/Score1/Score2/EssayText, tab-separated, no quoting. Rows with
    the wrong column count, non-integer scores, or scores outside the item's
    scale raise IngestionError naming the line number. Empty response text is
    retained (legitimately score-0 data).

    items_meta optionally supplies {"<essay_set>": {"stem_text": ...,
    "expert_rubric": ...}}; the raw TSV carries neither, so stems default to
    a placeholder naming the essay set.
    """
    items_meta = items_meta or {}
    scale_map = dict(DEFAULT_SCALE_MAP)
    if scale_overrides:
        scale_map.update(scale_overrides)
    score_col = 2 if rater_choice == "score1" else 3

    grouped: dict[str, list[LabeledResponse]] = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot open dataset file {path}: {exc}") from exc
    with fh:
        header = fh.readline().rstrip("\n").rstrip("\r")
        cols = header.split("\t")
        if cols != EXPECTED_COLUMNS:
            raise IngestionError(
                f"unexpected header {cols!r} at line 1; expected {EXPECTED_COLUMNS!r}"
            )
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n").rstrip("\r")
            if line == "":
                continue
            fields = line.split("\t")
            if len(fields) != len(EXPECTED_COLUMNS):
                raise IngestionError(
                    f"wrong column count ({len(fields)}) at line {lineno}"
                )
            resp_id, essay_set, _, _, text = fields
            try:
                score = int(fields[score_col])
            except ValueError:
                raise IngestionError(
                    f"non-integer score {fields[score_col]!r} at line {lineno}"
                ) from None
            scale = scale_map.get(essay_set)
            if scale is None:
                raise IngestionError(f"unknown essay set {essay_set!r} at line {lineno}")
            if not scale.contains(score):
                raise IngestionError(f"score out of range at line {lineno}")
            try:
                check_reserved_header(text, f"response text at line {lineno}")
            except Exception as exc:
                raise IngestionError(str(exc)) from None
            grouped.setdefault(essay_set, []).append(
                LabeledResponse(response_id=resp_id, item_id=essay_set, text=text, human_score=score)
            )

    out: dict[str, tuple[Item, list[LabeledResponse]]] = {}
    for essay_set, responses in grouped.items():
        meta = items_meta.get(essay_set, {})
        stem = meta.get("stem_text") or f"ASAP-SAS essay set {essay_set} (stem text not bundled with the raw TSV)"
        expert = meta.get("expert_rubric")
        check_reserved_header(stem, f"stem text for item {essay_set}")
        if expert:
            check_reserved_header(expert, f"expert rubric for item {essay_set}")
        out[essay_set] = (
            Item(item_id=essay_set, stem_text=stem, scale=scale_map[essay_set], expert_rubric=expert),
            responses,
        )
    return out


# --- stratified split ------------------------------------------------------

def _seat_patterns(m: int, fracs: tuple[float, float, float]):
    """Floors plus ranked candidate seat assignments for one score level.

    The first pattern is the plain largest-remainder award with the
    train-before-val-before-test tie-break; the rest are ranked by descending
    total remainder of the awarded parts, then part order, giving the search
    in _apportion a deterministic preference order.
    """
    exact = [m * f for f in fracs]
    floors = [math.floor(e) for e in exact]
    seats = m - sum(floors)
    rems = [exact[i] - floors[i] for i in range(3)]
    combos = list(itertools.combinations(range(3), seats))
    combos.sort(key=lambda c: (-sum(rems[i] for i in c), c))
    return floors, combos


def _apportion(level_counts: Sequence[int], fracs: tuple[float, float, float]) -> list[list[int]]:
    """Per-level 3-way apportionment keeping every count within bounds.

    Each (level, part) cell stays within +/-1 of its exact share by
    floor/ceil construction; part totals are constrained within +/-1 of exact
    proportionality by selecting, in preference order, the first combination
    of per-level seat awards that satisfies the bound. The preferred
    combination is exactly independent per-level largest remainder, so it is
    returned unchanged whenever it already meets the total bound.
    """
    per_level = [_seat_patterns(m, fracs) for m in level_counts]
    n = sum(level_counts)
    exact_tot = [n * f for f in fracs]
    base_tot = [sum(fl[p] for fl, _ in per_level) for p in range(3)]

    for choice in itertools.product(*(combos for _, combos in per_level)):
        tot = list(base_tot)
        for seats in choice:
            for p in seats:
                tot[p] += 1
        if all(abs(tot[p] - exact_tot[p]) <= 1 + 1e-9 for p in range(3)):
            alloc = []
            for (floors, _), seats in zip(per_level, choice):
                row = list(floors)
                for p in seats:
                    row[p] += 1
                alloc.append(row)
            return alloc
    # Unreachable for 3 parts by controlled-rounding feasibility; covered by
    # randomized stress tests.
    raise SplitError("no apportionment satisfies the total-deviation bound")


def stratified_split(responses: Sequence[LabeledResponse], spec: SplitSpec) -> DatasetSplit:
    """Stratified, seeded, deterministic 3-way split of one item's responses.

    Within each score level, responses are shuffled by a PCG64 generator
    seeded from (spec.seed, item_id), then allotted to parts by the
    apportionment above. Part contents are ordered by (score level, shuffled
    order).
    """
    if not responses:
        raise SplitError("no responses to split")
    item_ids = {r.item_id for r in responses}
    if len(item_ids) != 1:
        raise SplitError(f"responses span multiple items: {sorted(item_ids)}")
    item_id = next(iter(item_ids))

    levels = sorted({r.human_score for r in responses})
    by_level = {lv: [r for r in responses if r.human_score == lv] for lv in levels}
    alloc = _apportion([len(by_level[lv]) for lv in levels], spec.fractions)

    rng = np.random.default_rng(np.random.PCG64(derive_seed(spec.seed, item_id, "split")))
    parts: dict[str, list[LabeledResponse]] = {"train": [], "val": [], "test": []}
    for lv, row in zip(levels, alloc):
        group = by_level[lv]
        order = rng.permutation(len(group))
        shuffled = [group[i] for i in order]
        n_train, n_val, _ = row
        parts["train"].extend(shuffled[:n_train])
        parts["val"].extend(shuffled[n_train:n_train + n_val])
        parts["test"].extend(shuffled[n_train + n_val:])

    if any(len(p) == 0 for p in parts.values()):
        raise SplitError("split too small: a part is empty after apportionment")
    return DatasetSplit(
        train=tuple(parts["train"]), val=tuple(parts["val"]), test=tuple(parts["test"])
    )


def make_batches(train_size: int, target: int = 100, seed: int = 0) -> BatchPlan:
    """Shuffle train indices and chunk them into batches of about target size.

    A trailing batch smaller than ceil(target/2) merges into the previous
    batch so the diagnoser never sees a degenerate handful of errors.
    """
    if train_size < 1:
        raise ValueError("train_size must be >= 1")
    if target < 1:
        raise ValueError("target must be >= 1")
    rng = np.random.default_rng(np.random.PCG64(seed))
    order = [int(i) for i in rng.permutation(train_size)]
    batches = [order[i:i + target] for i in range(0, train_size, target)]
    if len(batches) > 1 and len(batches[-1]) < math.ceil(target / 2):
        tail = batches.pop()
        batches[-1] = batches[-1] + tail
    return BatchPlan(batches=tuple(tuple(b) for b in batches), target_batch_size=target)


def split_manifest(item_id: str, spec: SplitSpec, split: DatasetSplit, plan: BatchPlan) -> dict:
    """JSON-ready manifest listing response ids per part plus seed and PRNG."""
    return {
        "item_id": item_id,
        "seed": spec.seed,
        "prng": PRNG_NAME,
        "fractions": list(spec.fractions),
        "parts": {name: [r.response_id for r in part] for name, part in split.parts.items()},
        "batches": [list(b) for b in plan.batches],
        "target_batch_size": plan.target_batch_size,
    }


def manifest_content_hash(manifest: dict) -> str:
    return hashlib.sha256(
        json.dumps(manifest, sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()
