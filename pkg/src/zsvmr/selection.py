"""Ranking of scored candidates and greedy temporal NMS."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import kernels
from .core import CandidateSpan, Caption, DebiasedQuerySet, PipelineConfig, ScoredSpan
from .errors import ValidationError
from .scoring import Embedder, combined_score, normalized_length, span_score


def temporal_iou(a: CandidateSpan, b: CandidateSpan) -> float:
    inter = min(a.end_s, b.end_s) - max(a.start_s, b.start_s)
    if inter <= 0:
        return 0.0
    union = (a.end_s - a.start_s) + (b.end_s - b.start_s) - inter
    return inter / union


def rank(spans: Sequence[ScoredSpan]) -> list[ScoredSpan]:
    """Score descending; ties go to the earlier start, then the longer span."""
    return sorted(spans, key=lambda s: (-s.score, s.start_s, -(s.end_s - s.start_s)))


def nms(spans: Sequence[ScoredSpan], sigma: float) -> list[ScoredSpan]:
    """Greedy suppression of spans whose IoU with a kept span exceeds ``sigma``.

    Exact duplicates of a kept span are always dropped, even at ``sigma=1``.
    """
    if not 0.0 < sigma <= 1.0:
        raise ValidationError(f"sigma {sigma} outside (0, 1]")
    ordered = rank(spans)
    if len(ordered) <= 1:
        return ordered
    starts = np.array([s.start_s for s in ordered], dtype=np.float64)
    ends = np.array([s.end_s for s in ordered], dtype=np.float64)
    keep = kernels.greedy_nms(starts, ends, float(sigma))
    return [ordered[i] for i in keep.tolist()]


def score_candidates(
    candidates: Sequence[CandidateSpan],
    span_captions: Sequence[Caption],
    debiased: DebiasedQuerySet,
    embedder: Embedder,
    lam: float,
    duration_s: float,
) -> list[ScoredSpan]:
    if len(candidates) != len(span_captions):
        raise ValidationError(f"{len(candidates)} candidates but {len(span_captions)} captions")
    out = []
    for span, caption in zip(candidates, span_captions):
        if caption.failed:
            continue
        s = span_score(caption, debiased, embedder)
        out.append(
            ScoredSpan(
                span=span,
                s_span=s,
                e_norm=normalized_length(span, duration_s),
                score=combined_score(s, span, duration_s, lam),
                lam=lam,
            )
        )
    return out


def select(
    candidates: Sequence[CandidateSpan],
    span_captions: Sequence[Caption],
    debiased: DebiasedQuerySet,
    embedder: Embedder,
    config: PipelineConfig,
    duration_s: float,
) -> list[ScoredSpan]:
    scored = score_candidates(candidates, span_captions, debiased, embedder, config.lam, duration_s)
    return nms(scored, config.sigma)
