"""Independent reference implementations used only to generate expected values.

Deliberately written with explicit loops and O/E/w matrices, no shared code
with the package, so tests compare two separately derived computations.
"""

from __future__ import annotations

import math


def qwk_oracle(human: list[int], predicted: list[int], min_score: int, max_score: int) -> float:
    """Direct-formula quadratic weighted kappa over the full scale."""
    levels = max_score - min_score + 1
    n = len(human)
    observed = [[0.0] * levels for _ in range(levels)]
    for h, p in zip(human, predicted):
        observed[h - min_score][p - min_score] += 1.0
    hist_h = [0.0] * levels
    hist_p = [0.0] * levels
    for h in human:
        hist_h[h - min_score] += 1.0
    for p in predicted:
        hist_p[p - min_score] += 1.0
    expected = [[hist_h[i] * hist_p[j] / n for j in range(levels)] for i in range(levels)]
    weights = [[(i - j) ** 2 / (levels - 1) ** 2 for j in range(levels)] for i in range(levels)]
    num = sum(weights[i][j] * observed[i][j] for i in range(levels) for j in range(levels))
    den = sum(weights[i][j] * expected[i][j] for i in range(levels) for j in range(levels))
    if den == 0.0:
        raise ZeroDivisionError("degenerate")
    return 1.0 - num / den


def largest_remainder_oracle(count: int, fractions: tuple[float, float, float]) -> list[int]:
    """3-way largest remainder for one level, ties awarded in part order."""
    exact = [count * f for f in fractions]
    floors = [math.floor(e) for e in exact]
    seats = count - sum(floors)
    by_remainder = sorted(range(3), key=lambda i: (-(exact[i] - floors[i]), i))
    out = list(floors)
    for i in by_remainder[:seats]:
        out[i] += 1
    return out


def lower_median_oracle(values: list[float]) -> float:
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def transfer_aggregate_oracle(cells: list[dict]) -> dict:
    """Hand-rolled off-diagonal aggregates over dicts with gain keys."""
    off = [c for c in cells if not c["in_distribution"]]
    gains_s0 = [c["gain_s0"] for c in off if c["gain_s0"] is not None]
    gains_best = [c["gain_best"] for c in off if c["gain_best"] is not None]
    gains_expert = [c["gain_expert"] for c in off if c["gain_expert"] is not None]
    return {
        "fraction_improving_over_s0": sum(1 for g in gains_s0 if g > 0) / len(gains_s0),
        "median_relative_gain_vs_s0": lower_median_oracle(gains_s0),
        "fraction_at_or_above_target_best": sum(1 for g in gains_best if g >= 0) / len(gains_best),
        "median_gain_vs_expert": lower_median_oracle(gains_expert),
    }
