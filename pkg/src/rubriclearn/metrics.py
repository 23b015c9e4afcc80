"""Ordinal agreement (quadratic weighted kappa) and per-iteration error statistics.

QWK uses the standard Cohen quadratic-weight form with full-scale level
indexing: all levels of the item's scale are present in the weight and
expected matrices even when unobserved, so values stay comparable across
validation passes that miss levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import LabeledResponse, ScoreRecord, ScoreScale
from .errors import DataError, DegenerateDistributionError, PairingError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts grid with rows = human score, cols = predicted score."""

    scale: ScoreScale
    counts: tuple[tuple[int, ...], ...]

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def trace(self) -> int:
        return sum(self.counts[i][i] for i in range(len(self.counts)))

    def to_json_dict(self) -> dict:
        return {
            "scale": {"min_score": self.scale.min_score, "max_score": self.scale.max_score},
            "counts": [list(row) for row in self.counts],
        }


@dataclass(frozen=True)
class ErrorStats:
    """Directional error distribution for one scored set."""

    accuracy: float
    over_count: int
    under_count: int
    exact_count: int
    per_pair: dict[tuple[int, int], int]
    error_indices: tuple[str, ...]

    @property
    def total(self) -> int:
        return self.over_count + self.under_count + self.exact_count

    def to_json_dict(self) -> dict:
        pairs = sorted(self.per_pair.items(), key=lambda kv: (-kv[1], kv[0]))
        return {
            "accuracy": self.accuracy,
            "over_count": self.over_count,
            "under_count": self.under_count,
            "exact_count": self.exact_count,
            "per_pair": [
                {"human": h, "predicted": p, "count": n} for (h, p), n in pairs
            ],
            "error_indices": list(self.error_indices),
        }


def error_stats_from_dict(d: dict) -> ErrorStats:
    return ErrorStats(
        accuracy=d["accuracy"],
        over_count=d["over_count"],
        under_count=d["under_count"],
        exact_count=d["exact_count"],
        per_pair={(e["human"], e["predicted"]): e["count"] for e in d["per_pair"]},
        error_indices=tuple(d["error_indices"]),
    )


def _validate_pairs(human: Sequence[int], predicted: Sequence[int], scale: ScoreScale) -> None:
    if len(human) != len(predicted):
        raise DataError(f"length mismatch: {len(human)} human vs {len(predicted)} predicted")
    if len(human) == 0:
        raise DataError("empty score lists")
    for name, values in (("human", human), ("predicted", predicted)):
        for v in values:
            if not scale.contains(v):
                raise DataError(f"{name} score {v} outside scale [{scale.min_score}, {scale.max_score}]")


def qwk(human: Sequence[int], predicted: Sequence[int], scale: ScoreScale) -> float:
    """Cohen's kappa with quadratic weights over the full scale.

    Weight(i, j) = (i - j)^2 / (L - 1)^2; expected matrix is the outer product
    of the marginal histograms normalized to the observed total. Raises
    DegenerateDistributionError when both raters are constant (weighted
    expected disagreement is zero).
    """
    _validate_pairs(human, predicted, scale)
    lo = scale.min_score
    L = scale.num_levels
    h = np.asarray(human, dtype=np.int64) - lo
    p = np.asarray(predicted, dtype=np.int64) - lo
    n = len(h)

    observed = np.zeros((L, L), dtype=np.float64)
    np.add.at(observed, (h, p), 1.0)

    hist_h = np.bincount(h, minlength=L).astype(np.float64)
    hist_p = np.bincount(p, minlength=L).astype(np.float64)
    expected = np.outer(hist_h, hist_p) / n

    idx = np.arange(L, dtype=np.float64)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (L - 1) ** 2

    denom = float(np.sum(weights * expected))
    if denom == 0.0:
        raise DegenerateDistributionError("degenerate distribution: both raters constant")
    return 1.0 - float(np.sum(weights * observed)) / denom


def confusion(human: Sequence[int], predicted: Sequence[int], scale: ScoreScale) -> ConfusionMatrix:
    """Tally counts[h][p] over all pairs."""
    _validate_pairs(human, predicted, scale)
    lo = scale.min_score
    L = scale.num_levels
    counts = np.zeros((L, L), dtype=np.int64)
    np.add.at(counts, (np.asarray(human) - lo, np.asarray(predicted) - lo), 1)
    return ConfusionMatrix(scale=scale, counts=tuple(tuple(int(c) for c in row) for row in counts))


def error_stats(
    records: Sequence[tuple[LabeledResponse, ScoreRecord]], scale: ScoreScale
) -> ErrorStats:
    """Accuracy, over/under split, per-pair confusion counts and error ids.

    Records must be (response, score_record) pairs matched by response_id;
    error_indices preserves input order.
    """
    if not records:
        raise DataError("no records")
    over = under = exact = 0
    per_pair: dict[tuple[int, int], int] = {}
    error_indices: list[str] = []
    for resp, rec in records:
        if resp.response_id != rec.response_id:
            raise PairingError(
                f"record {rec.response_id} does not pair with response {resp.response_id}"
            )
        h, p = resp.human_score, rec.predicted_score
        if not scale.contains(h) or not scale.contains(p):
            raise DataError(f"score pair ({h}, {p}) outside scale")
        if p > h:
            over += 1
        elif p < h:
            under += 1
        else:
            exact += 1
            continue
        per_pair[(h, p)] = per_pair.get((h, p), 0) + 1
        error_indices.append(resp.response_id)
    total = over + under + exact
    return ErrorStats(
        accuracy=exact / total,
        over_count=over,
        under_count=under,
        exact_count=exact,
        per_pair=per_pair,
        error_indices=tuple(error_indices),
    )
