"""Chat and embedding providers."""

from .base import Backend, BackendFingerprint, ChatRequest, ImagePart, Message, TextPart
from .cache import CachedBackend, DiskCache, cache_key
from .http import HTTPBackend
from .synthetic import SyntheticBackend, VideoPlan, frame_url, hashed_bow, synthetic_caption, synthetic_span_caption

__all__ = [
    "Backend",
    "BackendFingerprint",
    "CachedBackend",
    "ChatRequest",
    "DiskCache",
    "HTTPBackend",
    "ImagePart",
    "Message",
    "SyntheticBackend",
    "TextPart",
    "VideoPlan",
    "cache_key",
    "frame_url",
    "hashed_bow",
    "synthetic_caption",
    "synthetic_span_caption",
]
