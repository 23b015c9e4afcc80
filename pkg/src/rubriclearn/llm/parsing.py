"""Completion parsing: final-score extraction and augmentation extraction."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Literal

from ..core import ScoreScale

logger = logging.getLogger(__name__)

_SCORE_MARKER = re.compile(r"\[\[(\d+)\]\]")

DELTA_OUTPUT_HEADER = "UPDATED AUGMENTATION:"

ExtractStatus = Literal["ok", "clamped", "failed"]


@dataclass(frozen=True)
class ExtractedScore:
    score: int | None
    justification: str
    status: ExtractStatus


def extract_score(completion: str, scale: ScoreScale) -> ExtractedScore:
    """Pull the final [[X]] marker out of a scorer completion.

    The template puts the marker on the last line, so the LAST match wins;
    models sometimes mention bracketed digits mid-justification. Out-of-range
    digits clamp to the nearest bound. No match is a status, not an error;
    the caller owns the retry/fallback policy.
    """
    matches = list(_SCORE_MARKER.finditer(completion))
    if not matches:
        return ExtractedScore(score=None, justification=completion.strip(), status="failed")
    last = matches[-1]
    justification = completion[: last.start()].strip()
    value = int(last.group(1))
    if scale.contains(value):
        return ExtractedScore(score=value, justification=justification, status="ok")
    return ExtractedScore(score=scale.clamp(value), justification=justification, status="clamped")


def extract_delta(completion: str) -> tuple[str, bool]:
    """Take everything after the last augmentation header as the new delta.

    Returns (delta, header_found). When the header is absent the whole
    completion is treated as the delta and a warning is logged.
    """
    idx = completion.rfind(DELTA_OUTPUT_HEADER)
    if idx < 0:
        logger.warning("diagnoser completion missing %r header; using whole completion", DELTA_OUTPUT_HEADER)
        return completion.strip(), False
    return completion[idx + len(DELTA_OUTPUT_HEADER):].strip(), True
