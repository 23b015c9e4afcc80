"""Skill composition, domain type invariants, and persistence round-trips."""

import json

import pytest
from hypothesis import given, strategies as st

from rubriclearn.core import (
    DELTA_HEADER,
    Item,
    LabeledResponse,
    Rubric,
    ScoreRecord,
    ScoreScale,
    Skill,
    check_reserved_header,
    compose_skill,
    item_from_dict,
    labeled_response_from_dict,
    read_jsonl,
    rubric_from_dict,
    score_record_from_dict,
    skill_from_dict,
    split_composed_skill,
    to_json_dict,
    write_jsonl,
)
from rubriclearn.errors import ReservedHeaderError


def test_compose_empty_delta_is_identity():
    skill = Skill(scaffold="Generate a scoring rubric for the test item.")
    assert compose_skill(skill) == "Generate a scoring rubric for the test item."


def test_compose_inserts_header_block():
    skill = Skill(scaffold="A", delta="B", version=1)
    assert compose_skill(skill) == "A\n\nLEARNED RUBRIC CONSTRUCTION RULES:\n\nB"


def test_composed_skill_starts_with_scaffold():
    skill = Skill(scaffold="scaffold text", delta="extra rules", version=3)
    assert compose_skill(skill).startswith("scaffold text")


@given(
    scaffold=st.text(st.characters(codec="ascii", categories=("L", "N", "P", "Z")), min_size=1),
    delta=st.text(st.characters(codec="ascii", categories=("L", "N", "P", "Z"))),
)
def test_compose_split_round_trip(scaffold, delta):
    if DELTA_HEADER in scaffold or DELTA_HEADER in delta:
        return
    version = 0 if delta == "" else 1
    composed = compose_skill(Skill(scaffold=scaffold, delta=delta, version=version))
    assert split_composed_skill(composed) == (scaffold, delta)


def test_skill_version_zero_iff_empty_delta():
    with pytest.raises(ValueError):
        Skill(scaffold="s", delta="d", version=0)
    with pytest.raises(ValueError):
        Skill(scaffold="s", delta="", version=1)


def test_skill_scaffold_required():
    with pytest.raises(ValueError):
        Skill(scaffold="")


def test_scale_invariants():
    scale = ScoreScale(0, 3)
    assert scale.num_levels == 4
    assert scale.clamp(7) == 3
    assert scale.clamp(-2) == 0
    with pytest.raises(ValueError):
        ScoreScale(2, 2)


def test_item_requires_stem():
    with pytest.raises(ValueError):
        Item(item_id="1", stem_text="", scale=ScoreScale(0, 2))


def test_rubric_requires_text():
    with pytest.raises(ValueError):
        Rubric(item_id="1", text="", produced_by_skill_version=0, iteration=0)


def test_reserved_header_check():
    check_reserved_header("plain text", "nowhere")
    with pytest.raises(ReservedHeaderError):
        check_reserved_header(f"sneaky {DELTA_HEADER} injection", "test text")


def test_jsonl_round_trip(tmp_path):
    objs = [
        LabeledResponse(response_id="1", item_id="3", text="an answer", human_score=2),
        LabeledResponse(response_id="2", item_id="3", text="", human_score=0),
    ]
    path = tmp_path / "responses.jsonl"
    write_jsonl(path, objs)
    loaded = [labeled_response_from_dict(d) for d in read_jsonl(path)]
    assert loaded == objs


def test_all_core_types_round_trip_through_dicts():
    scale = ScoreScale(0, 3)
    item = Item(item_id="5", stem_text="Describe the cycle.", scale=scale, expert_rubric="R")
    skill = Skill(scaffold="s", delta="d", variant_label="weak", version=2)
    rubric = Rubric(item_id="5", text="rubric", produced_by_skill_version=2, iteration=4)
    record = ScoreRecord(response_id="9", predicted_score=1, justification="j",
                         parse_status="ok", raw_completion="j [[1]]")
    assert item_from_dict(json.loads(json.dumps(to_json_dict(item)))) == item
    assert skill_from_dict(json.loads(json.dumps(to_json_dict(skill)))) == skill
    assert rubric_from_dict(json.loads(json.dumps(to_json_dict(rubric)))) == rubric
    assert score_record_from_dict(json.loads(json.dumps(to_json_dict(record)))) == record
