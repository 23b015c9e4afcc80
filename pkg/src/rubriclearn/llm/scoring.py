"""Batch scoring orchestration shared by the optimizer and the evaluator.

Parse-failure policy: a completion without a final [[X]] marker is re-issued
up to 2 more times (identical request; real providers are not
bit-deterministic). If all 3 attempts fail to parse, the response is
assigned the fallback score (modal human score of the training split) with
parse_status "fallback" so the rate stays visible in reports. Excluding
failures instead would silently inflate agreement.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

from ..core import LabeledResponse, ScoreRecord, ScoreScale
from .parsing import extract_score
from .prompts import ChatRequest
from .provider import Provider

logger = logging.getLogger(__name__)

PARSE_ATTEMPTS = 3


def modal_score(responses: Sequence[LabeledResponse]) -> int:
    """Most frequent human score; ties break toward the lower score."""
    counts: dict[int, int] = {}
    for r in responses:
        counts[r.human_score] = counts.get(r.human_score, 0) + 1
    return min(counts, key=lambda s: (-counts[s], s))


def score_one(
    provider: Provider,
    request: ChatRequest,
    response_id: str,
    scale: ScoreScale,
    fallback_score: int,
) -> ScoreRecord:
    completion = ""
    for _ in range(PARSE_ATTEMPTS):
        completion = provider.complete(request)
        extracted = extract_score(completion, scale)
        if extracted.status != "failed":
            return ScoreRecord(
                response_id=response_id,
                predicted_score=extracted.score,
                justification=extracted.justification,
                parse_status=extracted.status,
                raw_completion=completion,
            )
    logger.warning("parse failed %d times for response %s; using fallback score %d",
                   PARSE_ATTEMPTS, response_id, fallback_score)
    return ScoreRecord(
        response_id=response_id,
        predicted_score=fallback_score,
        justification=completion.strip(),
        parse_status="fallback",
        raw_completion=completion,
    )


def score_responses(
    provider: Provider,
    responses: Sequence[LabeledResponse],
    prompt_for: Callable[[LabeledResponse], ChatRequest],
    scale: ScoreScale,
    fallback_score: int,
    parallelism: int = 1,
) -> list[ScoreRecord]:
    """Score every response; results come back in input order regardless of
    provider concurrency, so downstream metrics are order-deterministic."""

    def work(resp: LabeledResponse) -> ScoreRecord:
        return score_one(provider, prompt_for(resp), resp.response_id, scale, fallback_score)

    if parallelism <= 1 or len(responses) <= 1:
        return [work(r) for r in responses]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(work, responses))


def fallback_rate(records: Sequence[ScoreRecord]) -> float:
    if not records:
        return 0.0
    return sum(1 for r in records if r.parse_status == "fallback") / len(records)
