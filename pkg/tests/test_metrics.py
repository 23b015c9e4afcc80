"""QWK against a direct-formula oracle, confusion tallies, and error statistics."""

import numpy as np
import pytest

from rubriclearn.core import LabeledResponse, ScoreRecord, ScoreScale
from rubriclearn.errors import DataError, DegenerateDistributionError, PairingError
from rubriclearn.metrics import confusion, error_stats, error_stats_from_dict, qwk

from oracles import qwk_oracle


def _record(rid: str, score: int) -> ScoreRecord:
    return ScoreRecord(response_id=rid, predicted_score=score, justification="j",
                       parse_status="ok", raw_completion=f"j [[{score}]]")


def _pairs(human, predicted, item_id="1"):
    out = []
    for i, (h, p) in enumerate(zip(human, predicted)):
        rid = str(i)
        out.append((LabeledResponse(rid, item_id, f"resp {i}", h), _record(rid, p)))
    return out


def test_qwk_perfect_agreement_is_exactly_one():
    assert qwk([0, 1, 2, 1, 0], [0, 1, 2, 1, 0], ScoreScale(0, 2)) == 1.0


def test_qwk_hand_computed_three_level_case():
    # O = [[1,1,0],[0,1,1],[1,0,1]], marginals all 2, E = 2/3 everywhere,
    # sum(wO) = 1.5, sum(wE) = 2 => 1 - 0.75 = 0.25.
    human = [0, 0, 1, 1, 2, 2]
    predicted = [0, 1, 1, 2, 2, 0]
    value = qwk(human, predicted, ScoreScale(0, 2))
    assert value == pytest.approx(0.25, abs=1e-12)
    assert value == pytest.approx(qwk_oracle(human, predicted, 0, 2), abs=1e-12)


def test_qwk_perfect_disagreement_two_levels():
    value = qwk([0, 1], [1, 0], ScoreScale(0, 1))
    assert value == pytest.approx(-1.0, abs=1e-12)
    assert qwk_oracle([0, 1], [1, 0], 0, 1) == pytest.approx(-1.0, abs=1e-12)


def test_qwk_degenerate_both_constant():
    with pytest.raises(DegenerateDistributionError):
        qwk([1, 1, 1], [1, 1, 1], ScoreScale(0, 2))


def test_qwk_length_mismatch():
    with pytest.raises(DataError):
        qwk([0, 1], [0], ScoreScale(0, 2))


def test_qwk_empty():
    with pytest.raises(DataError):
        qwk([], [], ScoreScale(0, 2))


def test_qwk_out_of_scale_value():
    with pytest.raises(DataError):
        qwk([0, 4], [0, 1], ScoreScale(0, 3))


def test_qwk_matches_oracle_on_random_cases():
    rng = np.random.default_rng(7)
    for _ in range(100):
        scale = ScoreScale(0, int(rng.integers(2, 4)))
        n = int(rng.integers(5, 200))
        human = rng.integers(0, scale.max_score + 1, size=n).tolist()
        predicted = rng.integers(0, scale.max_score + 1, size=n).tolist()
        try:
            expected = qwk_oracle(human, predicted, scale.min_score, scale.max_score)
        except ZeroDivisionError:
            with pytest.raises(DegenerateDistributionError):
                qwk(human, predicted, scale)
            continue
        assert qwk(human, predicted, scale) == pytest.approx(expected, abs=1e-12)


def test_qwk_invariant_under_joint_level_reversal():
    rng = np.random.default_rng(11)
    for _ in range(100):
        scale = ScoreScale(0, int(rng.integers(1, 4)))
        n = int(rng.integers(5, 100))
        human = rng.integers(0, scale.max_score + 1, size=n).tolist()
        predicted = rng.integers(0, scale.max_score + 1, size=n).tolist()
        rev_h = [scale.max_score - h for h in human]
        rev_p = [scale.max_score - p for p in predicted]
        try:
            base = qwk(human, predicted, scale)
        except DegenerateDistributionError:
            continue
        assert qwk(rev_h, rev_p, scale) == pytest.approx(base, abs=1e-12)


def test_qwk_invariant_under_pair_permutation():
    rng = np.random.default_rng(13)
    human = rng.integers(0, 3, size=60).tolist()
    predicted = rng.integers(0, 3, size=60).tolist()
    base = qwk(human, predicted, ScoreScale(0, 2))
    order = rng.permutation(60)
    assert qwk([human[i] for i in order], [predicted[i] for i in order],
               ScoreScale(0, 2)) == pytest.approx(base, abs=1e-12)


def test_confusion_tally():
    cm = confusion([2, 2, 1], [3, 3, 1], ScoreScale(0, 3))
    assert cm.counts[2][3] == 2
    assert cm.counts[1][1] == 1
    assert cm.total == 3


def test_confusion_single_pair():
    cm = confusion([0], [0], ScoreScale(0, 2))
    assert cm.counts[0][0] == 1
    assert cm.total == 1


def test_confusion_empty_errors():
    with pytest.raises(DataError):
        confusion([], [], ScoreScale(0, 2))


def test_error_stats_direct_count():
    stats = error_stats(_pairs([1, 1, 1], [1, 2, 0]), ScoreScale(0, 2))
    assert stats.accuracy == pytest.approx(1 / 3)
    assert stats.over_count == 1
    assert stats.under_count == 1
    assert stats.per_pair == {(1, 2): 1, (1, 0): 1}
    assert stats.error_indices == ("1", "2")


def test_error_stats_all_exact():
    stats = error_stats(_pairs([0, 1, 2], [0, 1, 2]), ScoreScale(0, 2))
    assert stats.over_count == 0
    assert stats.under_count == 0
    assert stats.error_indices == ()
    assert stats.accuracy == 1.0


def test_error_stats_pairing_mismatch():
    resp = LabeledResponse("a", "1", "text", 1)
    rec = _record("b", 1)
    with pytest.raises(PairingError):
        error_stats([(resp, rec)], ScoreScale(0, 2))


def test_error_stats_accuracy_matches_confusion_trace():
    rng = np.random.default_rng(17)
    for _ in range(300):
        n = int(rng.integers(1, 40))
        human = rng.integers(0, 4, size=n).tolist()
        predicted = rng.integers(0, 4, size=n).tolist()
        scale = ScoreScale(0, 3)
        stats = error_stats(_pairs(human, predicted), scale)
        cm = confusion(human, predicted, scale)
        assert stats.accuracy == pytest.approx(cm.trace() / cm.total)
        assert stats.total == n


def test_error_stats_serialization_round_trip():
    stats = error_stats(_pairs([1, 1, 2, 0], [2, 0, 2, 0]), ScoreScale(0, 2))
    assert error_stats_from_dict(stats.to_json_dict()) == stats
