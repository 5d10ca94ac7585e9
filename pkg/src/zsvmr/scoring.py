"""Cosine scorers for frames and spans, and the length-aware combined score."""

from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np

from .core import CandidateSpan, Caption, DebiasedQuerySet, Embedding, FrameScoreMatrix
from .errors import DimensionMismatchError, ValidationError

FAILED_SIMILARITY = -1.0


class Embedder(Protocol):
    def embed(self, texts: Sequence[str]) -> list[Embedding]: ...


def cosine(a: Embedding, b: Embedding) -> float:
    if a.dim != b.dim:
        raise DimensionMismatchError(f"cosine of vectors with dims {a.dim} and {b.dim}")
    na = float(np.linalg.norm(a.values))
    nb = float(np.linalg.norm(b.values))
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine of a zero-norm vector")
    value = float(np.dot(a.values, b.values)) / (na * nb)
    return min(1.0, max(-1.0, value))


def _unit_rows(embeddings: Sequence[Embedding]) -> np.ndarray:
    dims = {e.dim for e in embeddings}
    if len(dims) > 1:
        raise DimensionMismatchError(f"embedding dimensions differ within a run: {sorted(dims)}")
    mat = np.stack([e.values for e in embeddings])
    return mat / np.linalg.norm(mat, axis=1, keepdims=True)


def cosine_matrix(left: Sequence[Embedding], right: Sequence[Embedding]) -> np.ndarray:
    a, b = _unit_rows(left), _unit_rows(right)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(f"embedding dims {a.shape[1]} and {b.shape[1]}")
    return np.clip(a @ b.T, -1.0, 1.0)


def frame_scores(debiased: DebiasedQuerySet, frame_captions: Sequence[Caption], embedder: Embedder) -> FrameScoreMatrix:
    """Similarity of every rewrite to every frame caption; failed captions score -1."""
    if not frame_captions:
        raise ValidationError("no frame captions")
    ok = [j for j, c in enumerate(frame_captions) if not c.failed]
    out = np.full((debiased.n_d, len(frame_captions)), FAILED_SIMILARITY)
    if ok:
        embs = embedder.embed(list(debiased.rewrites) + [frame_captions[j].text for j in ok])
        sims = cosine_matrix(embs[: debiased.n_d], embs[debiased.n_d :])
        out[:, ok] = sims
    return FrameScoreMatrix(out)


def span_similarities(span_caption: Caption, debiased: DebiasedQuerySet, embedder: Embedder) -> np.ndarray:
    """Cosine of one span caption against each rewrite."""
    if span_caption.failed:
        raise ValidationError("cannot score a failed span caption")
    embs = embedder.embed([span_caption.text] + list(debiased.rewrites))
    return cosine_matrix(embs[:1], embs[1:])[0]


def span_score(span_caption: Caption, debiased: DebiasedQuerySet, embedder: Embedder) -> float:
    return float(np.mean(span_similarities(span_caption, debiased, embedder)))


def normalized_length(span: CandidateSpan, duration_s: float) -> float:
    if duration_s <= 0:
        raise ValidationError("duration must be > 0")
    return min(1.0, max(0.0, (span.end_s - span.start_s) / duration_s))


def combined_score(s_span: float, span: CandidateSpan, duration_s: float, lam: float) -> float:
    """``(1 - lam) * s_span + lam * length / duration``; longer spans get a bonus."""
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda {lam} outside [0, 1]")
    return (1.0 - lam) * s_span + lam * normalized_length(span, duration_s)


def saliency_track(scores: FrameScoreMatrix) -> list[float]:
    return scores.scores.mean(axis=0).tolist()
