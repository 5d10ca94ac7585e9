"""Deterministic stand-in for the caption and embedding models.

Captions are derived from a :class:`VideoPlan`: frames inside a planted span
describe the plan's phrase, all other frames get distractor sentences that
share no content words with it. Embeddings are hashed bags of words.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass
from typing import Any, Iterable, Mapping, Optional

import numpy as np

from ..core import Embedding
from ..errors import BackendError, ValidationError
from ..prompts import DEBIAS_TEMPLATE, IMAGE_CAPTION_PROMPT, VIDEO_CAPTION_PROMPT, parse_count_word
from .base import Backend, BackendFingerprint, ChatRequest

SYNTH_SCHEME = "synth://"
DEFAULT_DIM = 256

# Fillers are appended to in-span captions; all have four tokens so in-span
# similarities stay level.
FILLERS = (
    "seen from the side",
    "shot in soft light",
    "framed near the wall",
    "with muted background noise",
)

_TOKEN = re.compile(r"[a-z0-9]+")
_DEBIAS_PREFIX = DEBIAS_TEMPLATE.split("<Query>")[0]
_RAW_SENTENCE = re.compile(r"Raw sentence: '(.*)'\n", re.DOTALL)
_COUNT = re.compile(r"Please provide (\S+) different rewrites")
REWRITE_FORMS = (
    "{}",
    "in this video {}",
    "{} on camera",
    "we watch as {}",
    "the clip shows that {}",
)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def frame_url(video_id: str, index: int) -> str:
    return f"{SYNTH_SCHEME}{video_id}/{index}"


def parse_frame_url(url: str) -> tuple[str, int]:
    if not url.startswith(SYNTH_SCHEME):
        raise BackendError(f"not a synthetic frame reference: {url[:60]!r}")
    vid, _, idx = url[len(SYNTH_SCHEME) :].rpartition("/")
    try:
        return vid, int(idx)
    except ValueError:
        raise BackendError(f"bad synthetic frame reference {url!r}") from None


@dataclass(frozen=True)
class VideoPlan:
    video_id: str
    duration_s: float
    fps: float
    spans: tuple[tuple[float, float], ...]
    phrase: str
    raw_query: str
    distractors: tuple[str, ...]
    scene_len: int = 8

    def __post_init__(self) -> None:
        object.__setattr__(self, "spans", tuple((float(s), float(e)) for s, e in self.spans))
        object.__setattr__(self, "distractors", tuple(self.distractors))
        if not self.distractors:
            raise ValidationError(f"{self.video_id}: plan needs distractor sentences")

    @property
    def n_frames(self) -> int:
        return int(np.ceil(self.duration_s * self.fps - 1e-9))

    def inside(self, index: int) -> bool:
        t = index / self.fps
        return any(s <= t < e for s, e in self.spans)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["spans"] = [list(s) for s in self.spans]
        d["distractors"] = list(self.distractors)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "VideoPlan":
        return cls(**{**d, "spans": tuple(tuple(s) for s in d["spans"]), "distractors": tuple(d["distractors"])})


def synthetic_caption(frame_index: int, plan: VideoPlan) -> str:
    if not 0 <= frame_index < plan.n_frames:
        raise ValidationError(f"{plan.video_id}: frame {frame_index} outside [0, {plan.n_frames})")
    if plan.inside(frame_index):
        return f"{plan.phrase} {FILLERS[frame_index % len(FILLERS)]}"
    return plan.distractors[(frame_index // plan.scene_len) % len(plan.distractors)]


def synthetic_span_caption(frame_indices: Iterable[int], plan: VideoPlan) -> str:
    """Phrase once if any sampled frame is inside a planted span, plus every distinct distractor seen."""
    pieces: list[str] = []
    for j in frame_indices:
        piece = plan.phrase if plan.inside(j) else synthetic_caption(j, plan)
        if piece not in pieces:
            pieces.append(piece)
    return "; ".join(pieces)


def hashed_bow(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    vec = np.zeros(dim, dtype=np.float64)
    tokens = tokenize(text) or [text.strip()]
    for tok in tokens:
        h = int.from_bytes(hashlib.blake2b(tok.encode("utf-8"), digest_size=8).digest(), "little")
        vec[h % dim] += 1.0
    return vec / np.linalg.norm(vec)


class SyntheticBackend(Backend):
    """Answers the pipeline's three prompts and embeds text without a model.

    With ``canned_reply`` set, every chat request returns that string.
    """

    kind = "synthetic"

    def __init__(
        self,
        plans: Optional[Mapping[str, VideoPlan]] = None,
        canned_reply: Optional[str] = None,
        dim: int = DEFAULT_DIM,
        max_inflight: int = 8,
    ):
        plans = dict(plans or {})
        digest = hashlib.sha256(
            json.dumps(
                {"plans": [plans[k].to_dict() for k in sorted(plans)], "canned": canned_reply, "dim": dim},
                sort_keys=True,
            ).encode("utf-8")
        ).hexdigest()
        super().__init__(f"synthetic-{digest[:12]}", max_inflight)
        self.plans = plans
        self.canned_reply = canned_reply
        self.dim = dim
        self._phrase_for = {p.raw_query: p.phrase for p in plans.values()}

    @property
    def fingerprint(self) -> BackendFingerprint:
        return BackendFingerprint(self.kind, self.model_name)

    def _plan(self, video_id: str) -> VideoPlan:
        try:
            return self.plans[video_id]
        except KeyError:
            raise BackendError(f"no synthetic plan for video {video_id!r}") from None

    def _chat(self, request: ChatRequest) -> str:
        if self.canned_reply is not None:
            return self.canned_reply
        text = request.user_text
        if text.startswith(_DEBIAS_PREFIX):
            return self._debias(text)
        if text.startswith(IMAGE_CAPTION_PROMPT):
            (url,) = request.images
            vid, idx = parse_frame_url(url)
            return synthetic_caption(idx, self._plan(vid))
        if text.startswith(VIDEO_CAPTION_PROMPT):
            refs = [parse_frame_url(u) for u in request.images]
            if not refs:
                raise BackendError("video caption request carries no frames")
            plan = self._plan(refs[0][0])
            return synthetic_span_caption((i for _, i in refs), plan)
        raise BackendError(f"synthetic backend cannot answer prompt {text[:40]!r}")

    def _debias(self, prompt: str) -> str:
        m = _RAW_SENTENCE.match(prompt)
        raw = m.group(1) if m else ""
        c = _COUNT.search(prompt)
        n = (parse_count_word(c.group(1)) if c else None) or 3
        phrase = self._phrase_for.get(raw, raw)
        lines = [REWRITE_FORMS[k % len(REWRITE_FORMS)].format(phrase) for k in range(n)]
        return "\n".join(f"{k + 1}. {line[0].upper()}{line[1:]}." for k, line in enumerate(lines))

    def _embed(self, texts: list[str]) -> list[Embedding]:
        return [Embedding(hashed_bow(t, self.dim)) for t in texts]
