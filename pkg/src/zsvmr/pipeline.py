"""Per-query orchestration: debias, caption, score, generate, select."""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .captioner import caption_frames, caption_span
from .core import CandidateSpan, Caption, DebiasedQuerySet, PipelineConfig, QueryRecord, ScoredSpan, VideoRecord
from .debias import debias_query
from .scoring import frame_scores, saliency_track
from .selection import select
from .span_gen import generate

logger = logging.getLogger(__name__)

ROLES = ("debias", "frame_caption", "span_caption", "embed")


@dataclass
class Backends:
    """The four model roles; one object may fill several roles."""

    debias: Any
    frame_caption: Any
    span_caption: Any
    embed: Any

    @classmethod
    def single(cls, backend: Any) -> "Backends":
        return cls(backend, backend, backend, backend)

    def items(self):
        return [(r, getattr(self, r)) for r in ROLES]

    def fingerprints(self) -> dict[str, str]:
        return {r: str(b.fingerprint) for r, b in self.items()}

    def total_calls(self) -> int:
        seen: dict[int, Any] = {}
        for _, b in self.items():
            inner = getattr(b, "inner", b)
            seen[id(inner)] = inner
        return sum(b.calls for b in seen.values())


@dataclass
class QueryResult:
    qid: str
    debiased: DebiasedQuerySet
    candidates: list[CandidateSpan]
    predictions: list[ScoredSpan]
    saliency: list[float]

    def to_record(self, with_saliency: bool = False, with_candidates: bool = False) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "qid": self.qid,
            "spans": [[p.start_s, p.end_s, p.score] for p in self.predictions],
        }
        if with_saliency:
            rec["saliency"] = self.saliency
        if with_candidates:
            rec["candidates"] = [[c.start_s, c.end_s] for c in self.candidates]
        return rec


@dataclass
class Memo:
    """In-process store of query-independent products, shared across sweep points."""

    frame_captions: dict[str, list[Caption]] = field(default_factory=dict)
    span_captions: dict[tuple[str, float, float], Caption] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)


class Retriever:
    def __init__(
        self,
        backends: Backends,
        config: PipelineConfig,
        frames_root: Optional[Path] = None,
        memo: Optional[Memo] = None,
    ):
        self.backends = backends
        self.config = config
        self.frames_root = frames_root
        self.memo = memo if memo is not None else Memo()
        self._video_locks: dict[str, threading.Lock] = {}

    def debias(self, query: QueryRecord) -> DebiasedQuerySet:
        return debias_query(query.raw_text, self.backends.debias, self.config, qid=query.qid)

    def _video_lock(self, video_id: str) -> threading.Lock:
        with self.memo.lock:
            return self._video_locks.setdefault(video_id, threading.Lock())

    def frame_captions(self, video: VideoRecord) -> list[Caption]:
        with self._video_lock(video.video_id):
            hit = self.memo.frame_captions.get(video.video_id)
            if hit is None:
                hit = caption_frames(video, self.backends.frame_caption, self.config, self.frames_root)
                self.memo.frame_captions[video.video_id] = hit
            return hit

    def span_caption(self, video: VideoRecord, span: CandidateSpan) -> Caption:
        key = (video.video_id, span.start_s, span.end_s)
        with self.memo.lock:
            hit = self.memo.span_captions.get(key)
        if hit is None:
            hit = caption_span(video, span, self.backends.span_caption, self.config, self.frames_root)
            with self.memo.lock:
                self.memo.span_captions[key] = hit
        return hit

    def run(self, video: VideoRecord, query: QueryRecord, debiased: Optional[DebiasedQuerySet] = None) -> QueryResult:
        if debiased is None:
            debiased = self.debias(query)
        captions = self.frame_captions(video)
        scores = frame_scores(debiased, captions, self.backends.embed)
        candidates = generate(scores, self.config, video.fps, video.duration_s)
        span_caps = [self.span_caption(video, c) for c in candidates]
        ranked = select(candidates, span_caps, debiased, self.backends.embed, self.config, video.duration_s)
        return QueryResult(query.qid, debiased, candidates, ranked, saliency_track(scores))
