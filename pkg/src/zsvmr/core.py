"""Domain types shared across the retrieval pipeline.

All timestamps are float seconds. Frame ``j`` of a video sampled at ``fps``
covers ``[j / fps, (j + 1) / fps)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence, Union

import numpy as np

from .errors import ValidationError

Subject = Union[int, str]


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValidationError(msg)


# ---------------------------------------------------------------------------
# Videos and queries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VideoRecord:
    """A video's frame manifest."""

    video_id: str
    duration_s: float
    fps: float
    frames: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))
        _require(bool(self.video_id), "video_id must be non-empty")
        _require(self.duration_s > 0, f"{self.video_id}: duration_s must be > 0")
        _require(self.fps > 0, f"{self.video_id}: fps must be > 0")
        _require(len(self.frames) >= 1, f"{self.video_id}: at least one frame required")
        limit = math.ceil(self.duration_s * self.fps) + 1
        _require(
            len(self.frames) <= limit,
            f"{self.video_id}: {len(self.frames)} frames exceed ceil(duration*fps)+1={limit}",
        )

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def frame_time(self, index: int) -> float:
        return index / self.fps

    def to_dict(self) -> dict[str, Any]:
        return {
            "video_id": self.video_id,
            "duration_s": self.duration_s,
            "fps": self.fps,
            "frames": list(self.frames),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "VideoRecord":
        return cls(d["video_id"], float(d["duration_s"]), float(d["fps"]), tuple(d["frames"]))


@dataclass(frozen=True)
class QueryRecord:
    """A natural-language query with its ground-truth spans.

    ``gt_saliency`` holds per-clip annotator scores. When ``saliency_clip_ids``
    is set the scores belong to those clips only and every other clip scores 0;
    otherwise entry ``k`` belongs to clip ``k``.
    """

    qid: str
    video_id: str
    raw_text: str
    gt_spans: tuple[tuple[float, float], ...] = ()
    gt_saliency: Optional[tuple[tuple[int, ...], ...]] = None
    saliency_clip_ids: Optional[tuple[int, ...]] = None

    def __post_init__(self) -> None:
        spans = tuple((float(s), float(e)) for s, e in self.gt_spans)
        object.__setattr__(self, "gt_spans", spans)
        if self.gt_saliency is not None:
            sal = tuple(
                tuple(int(v) for v in (c if isinstance(c, (list, tuple)) else (c,)))
                for c in self.gt_saliency
            )
            object.__setattr__(self, "gt_saliency", sal)
        if self.saliency_clip_ids is not None:
            ids = tuple(int(i) for i in self.saliency_clip_ids)
            object.__setattr__(self, "saliency_clip_ids", ids)
            _require(
                self.gt_saliency is not None and len(self.gt_saliency) == len(ids),
                f"{self.qid}: saliency_clip_ids and gt_saliency lengths differ",
            )
        _require(bool(str(self.qid)), "qid must be non-empty")
        _require(bool(self.raw_text.strip()), f"{self.qid}: query text is empty")
        for s, e in spans:
            _require(0 <= s < e, f"{self.qid}: invalid span ({s}, {e})")

    def check_against(self, duration_s: float) -> None:
        for s, e in self.gt_spans:
            _require(e <= duration_s, f"{self.qid}: span ({s}, {e}) exceeds duration {duration_s}")

    def saliency_per_clip(self, n_clips: int) -> Optional[np.ndarray]:
        """Max-over-annotators saliency for each of ``n_clips`` clips."""
        if self.gt_saliency is None:
            return None
        out = np.zeros(n_clips, dtype=np.int64)
        ids = self.saliency_clip_ids if self.saliency_clip_ids is not None else range(len(self.gt_saliency))
        for cid, scores in zip(ids, self.gt_saliency):
            if 0 <= cid < n_clips:
                out[cid] = max(scores) if scores else 0
        return out

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "qid": self.qid,
            "video_id": self.video_id,
            "raw_text": self.raw_text,
            "gt_spans": [list(s) for s in self.gt_spans],
        }
        if self.gt_saliency is not None:
            d["gt_saliency"] = [list(c) for c in self.gt_saliency]
        if self.saliency_clip_ids is not None:
            d["saliency_clip_ids"] = list(self.saliency_clip_ids)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "QueryRecord":
        return cls(
            qid=str(d["qid"]),
            video_id=d["video_id"],
            raw_text=d["raw_text"],
            gt_spans=tuple(tuple(s) for s in d.get("gt_spans", ())),
            gt_saliency=d.get("gt_saliency"),
            saliency_clip_ids=d.get("saliency_clip_ids"),
        )


# ---------------------------------------------------------------------------
# Intermediate products
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DebiasedQuerySet:
    qid: str
    raw_text: str
    rewrites: tuple[str, ...]
    fallback_used: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "rewrites", tuple(self.rewrites))
        _require(len(self.rewrites) >= 1, f"{self.qid}: at least one rewrite required")
        _require(all(r.strip() for r in self.rewrites), f"{self.qid}: empty rewrite")
        if self.fallback_used:
            _require(self.rewrites == (self.raw_text,), f"{self.qid}: fallback must be the raw query")

    @property
    def n_d(self) -> int:
        return len(self.rewrites)

    def to_dict(self) -> dict[str, Any]:
        return {
            "qid": self.qid,
            "raw_text": self.raw_text,
            "rewrites": list(self.rewrites),
            "fallback_used": self.fallback_used,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DebiasedQuerySet":
        return cls(str(d["qid"]), d["raw_text"], tuple(d["rewrites"]), bool(d.get("fallback_used", False)))


@dataclass(frozen=True)
class Caption:
    """A frame-level or span-level caption.

    ``failed`` marks the sentinel produced when a frame could not be
    captioned; its text is empty and it scores -1 downstream.
    """

    subject: Subject
    text: str
    provider_fingerprint: str
    failed: bool = False

    def __post_init__(self) -> None:
        if self.failed:
            _require(self.text == "", "failed caption must carry empty text")
        else:
            _require(bool(self.text.strip()), f"caption for {self.subject!r} is empty")

    @classmethod
    def sentinel(cls, subject: Subject, fingerprint: str) -> "Caption":
        return cls(subject, "", fingerprint, failed=True)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Caption":
        return cls(d["subject"], d["text"], d["provider_fingerprint"], bool(d.get("failed", False)))


class Embedding:
    """Immutable float vector with non-zero norm."""

    __slots__ = ("values",)

    def __init__(self, values: Sequence[float] | np.ndarray):
        arr = np.array(values, dtype=np.float64).reshape(-1)
        _require(arr.size >= 1, "embedding must be non-empty")
        _require(bool(np.all(np.isfinite(arr))), "embedding has non-finite entries")
        _require(float(np.linalg.norm(arr)) > 0.0, "zero-norm embedding")
        arr.setflags(write=False)
        self.values = arr

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Embedding) and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())

    def __repr__(self) -> str:
        return f"Embedding(dim={self.dim})"


class FrameScoreMatrix:
    """Cosine similarities between debiased queries (rows) and frames (columns)."""

    __slots__ = ("scores",)

    def __init__(self, scores: np.ndarray | Sequence[Sequence[float]]):
        arr = np.array(scores, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        _require(arr.ndim == 2 and arr.shape[0] >= 1 and arr.shape[1] >= 1, "score matrix must be 2-D and non-empty")
        _require(bool(np.all((arr >= -1.0) & (arr <= 1.0))), "frame scores must lie in [-1, 1]")
        arr.setflags(write=False)
        self.scores = arr

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape  # type: ignore[return-value]

    def row(self, i: int) -> np.ndarray:
        return self.scores[i]

    def __repr__(self) -> str:
        return f"FrameScoreMatrix(shape={self.shape})"


@dataclass(frozen=True)
class CandidateSpan:
    start_s: float
    end_s: float
    source_rewrite: int = 0

    def __post_init__(self) -> None:
        _require(0 <= self.start_s < self.end_s, f"invalid span [{self.start_s}, {self.end_s})")

    @property
    def length(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class ScoredSpan:
    """A candidate with its span similarity, normalised length and combined score.

    When ``lam`` is given, ``score`` must equal ``(1 - lam) * s_span + lam * e_norm``.
    """

    span: CandidateSpan
    s_span: float
    e_norm: float
    score: float
    lam: Optional[float] = None

    def __post_init__(self) -> None:
        _require(-1.0 - 1e-12 <= self.s_span <= 1.0 + 1e-12, f"s_span {self.s_span} outside [-1, 1]")
        _require(-1e-12 <= self.e_norm <= 1.0 + 1e-12, f"e_norm {self.e_norm} outside [0, 1]")
        if self.lam is not None:
            expected = (1.0 - self.lam) * self.s_span + self.lam * self.e_norm
            _require(abs(expected - self.score) <= 1e-9, f"score {self.score} != combined {expected}")

    @property
    def start_s(self) -> float:
        return self.span.start_s

    @property
    def end_s(self) -> float:
        return self.span.end_s


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Temperatures:
    debias: float = 0.3
    frame_caption: float = 0.2
    span_caption: float = 0.2

    def __post_init__(self) -> None:
        for name in ("debias", "frame_caption", "span_caption"):
            _require(getattr(self, name) >= 0, f"temperature {name} must be >= 0")


DEFAULT_FPS = {
    "charades_sta": 1.0,
    "activitynet": 1.0,
    "qvhighlights": 0.5,
    "synthetic": 1.0,
}


@dataclass(frozen=True)
class PipelineConfig:
    n_d: int = 3
    eta: int = 10
    kappa: int = 7
    tau: int = 5
    lam: float = 0.2
    sigma: float = 0.9
    temperatures: Temperatures = field(default_factory=Temperatures)
    fps: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_FPS))
    max_span_frames: int = 8
    concurrency: int = 8

    def __post_init__(self) -> None:
        _require(self.n_d >= 1, "n_d must be >= 1")
        _require(self.eta >= 1, "eta must be >= 1")
        _require(self.kappa >= 1, "kappa must be >= 1")
        _require(self.tau >= 1, "tau must be >= 1")
        _require(0.0 <= self.lam <= 1.0, "lambda must lie in [0, 1]")
        _require(0.0 < self.sigma <= 1.0, "sigma must lie in (0, 1]")
        _require(self.max_span_frames >= 1, "max_span_frames must be >= 1")
        _require(self.concurrency >= 1, "concurrency must be >= 1")
        _require(all(v > 0 for v in self.fps.values()), "fps values must be > 0")

    def fps_for(self, dataset: str) -> float:
        try:
            return self.fps[dataset]
        except KeyError:
            raise ValidationError(f"no fps configured for dataset {dataset!r}") from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_d": self.n_d,
            "eta": self.eta,
            "kappa": self.kappa,
            "tau": self.tau,
            "lambda": self.lam,
            "sigma": self.sigma,
            "temperatures": asdict(self.temperatures),
            "fps": dict(sorted(self.fps.items())),
            "max_span_frames": self.max_span_frames,
            "concurrency": self.concurrency,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PipelineConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        temps = Temperatures(**d.pop("temperatures", {}))
        fps = dict(DEFAULT_FPS)
        fps.update({k: float(v) for k, v in d.pop("fps", {}).items()})
        known = {"n_d", "eta", "kappa", "tau", "lam", "sigma", "max_span_frames", "concurrency"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(temperatures=temps, fps=fps, **d)
