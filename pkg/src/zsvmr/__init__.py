"""Zero-shot video moment retrieval over frozen caption and embedding models."""

from .core import (
    CandidateSpan,
    Caption,
    DebiasedQuerySet,
    Embedding,
    FrameScoreMatrix,
    PipelineConfig,
    QueryRecord,
    ScoredSpan,
    Temperatures,
    VideoRecord,
)
from .errors import ValidationError

__version__ = "0.1.0"

__all__ = [
    "CandidateSpan",
    "Caption",
    "DebiasedQuerySet",
    "Embedding",
    "FrameScoreMatrix",
    "PipelineConfig",
    "QueryRecord",
    "ScoredSpan",
    "Temperatures",
    "ValidationError",
    "VideoRecord",
]
