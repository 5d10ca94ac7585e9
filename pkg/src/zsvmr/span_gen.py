"""Adaptive span generator.

Each similarity row gets its own threshold from an inverse cumulative
histogram over ``[min(row), max(row)]``; moments strictly above it are
marked, and marked moments are joined into spans until ``tau`` consecutive
unmarked moments close the current span.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import kernels
from .core import CandidateSpan, FrameScoreMatrix, PipelineConfig
from .errors import ValidationError

EPS = 1e-9
DEDUP_TOL = 1e-6


def _as_row(row) -> np.ndarray:
    arr = np.ascontiguousarray(row, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValidationError("similarity row is empty")
    return arr


def adaptive_threshold(row, eta: int, kappa: int) -> float:
    """Left edge of the highest histogram bin whose inverse cumulative count reaches ``kappa``.

    Rows that are constant or shorter than ``kappa`` get ``min(row) - 1e-9`` so
    that every moment passes.
    """
    if eta < 1 or kappa < 1:
        raise ValidationError("eta and kappa must be >= 1")
    return float(kernels.adaptive_threshold(_as_row(row), int(eta), int(kappa), EPS))


def segment_row(
    row,
    gamma: float,
    tau: int,
    fps: float,
    source_rewrite: int = 0,
    duration_s: Optional[float] = None,
) -> list[CandidateSpan]:
    if tau < 1:
        raise ValidationError("tau must be >= 1")
    arr = _as_row(row)
    firsts, lasts = kernels.segment_mask(arr > gamma, int(tau))
    spans = []
    for first, last in zip(firsts.tolist(), lasts.tolist()):
        start, end = first / fps, (last + 1) / fps
        if duration_s is not None:
            start, end = max(0.0, start), min(end, duration_s)
            if end <= start:
                continue
        spans.append(CandidateSpan(start, end, source_rewrite))
    return spans


def generate(
    scores: FrameScoreMatrix,
    config: PipelineConfig,
    fps: float,
    duration_s: float,
) -> list[CandidateSpan]:
    """Union of per-row spans, ordered by rewrite index then start time.

    Exact duplicates (start and end within 1e-6 s) keep the lowest rewrite index.
    """
    out: list[CandidateSpan] = []
    for i in range(scores.shape[0]):
        row = scores.row(i)
        gamma = adaptive_threshold(row, config.eta, config.kappa)
        for span in segment_row(row, gamma, config.tau, fps, source_rewrite=i, duration_s=duration_s):
            if any(
                abs(span.start_s - kept.start_s) <= DEDUP_TOL and abs(span.end_s - kept.end_s) <= DEDUP_TOL
                for kept in out
            ):
                continue
            out.append(span)
    return out
