"""Frame-level and span-level captioning through a chat backend."""

from __future__ import annotations

import base64
import logging
import math
import mimetypes
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from .backends.base import ChatRequest, ImagePart, TextPart
from .core import CandidateSpan, Caption, PipelineConfig, VideoRecord
from .errors import ValidationError
from .prompts import IMAGE_CAPTION_PROMPT, VIDEO_CAPTION_PROMPT

logger = logging.getLogger(__name__)

_PASSTHROUGH = ("synth://", "http://", "https://", "data:")


def frame_payload(ref: str, root: Optional[Path] = None) -> str:
    """URL for a frame reference: URLs pass through, files become base64 data URLs."""
    if ref.startswith(_PASSTHROUGH):
        return ref
    path = Path(ref)
    if root is not None and not path.is_absolute():
        path = root / path
    data = path.read_bytes()
    mime = mimetypes.guess_type(path.name)[0] or "image/jpeg"
    return f"data:{mime};base64,{base64.b64encode(data).decode('ascii')}"


def frame_caption_request(image_url: str, temperature: float = 0.2) -> ChatRequest:
    return ChatRequest.user(TextPart(IMAGE_CAPTION_PROMPT), ImagePart(image_url), temperature=temperature)


def span_caption_request(image_urls: list[str], temperature: float = 0.2) -> ChatRequest:
    parts = [TextPart(VIDEO_CAPTION_PROMPT)] + [ImagePart(u) for u in image_urls]
    return ChatRequest.user(*parts, temperature=temperature)


def _fingerprint(backend, template: str, temperature: float) -> str:
    return str(backend.fingerprint.with_prompt(template, temperature))


def caption_frames(
    video: VideoRecord,
    backend,
    config: PipelineConfig,
    frames_root: Optional[Path] = None,
) -> list[Caption]:
    """One caption per frame, in frame order.

    Frames that cannot be read, or that come back with an empty caption,
    yield a failed sentinel instead of aborting the video.
    """
    temp = config.temperatures.frame_caption
    fp = _fingerprint(backend, IMAGE_CAPTION_PROMPT, temp)

    def one(j: int) -> Caption:
        try:
            url = frame_payload(video.frames[j], frames_root)
        except OSError as exc:
            logger.warning("%s frame %d unreadable: %s", video.video_id, j, exc)
            return Caption.sentinel(j, fp)
        text = backend.chat(frame_caption_request(url, temp)).strip()
        if not text:
            logger.warning("%s frame %d: empty caption", video.video_id, j)
            return Caption.sentinel(j, fp)
        return Caption(j, text, fp)

    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        return list(pool.map(one, range(video.n_frames)))


def sample_span_frames(video: VideoRecord, span: CandidateSpan, max_frames: int = 8) -> list[int]:
    """Frame indices used to caption ``span``.

    All frames whose timestamp falls in ``[start, end)`` when there are at
    most ``max_frames`` of them, otherwise ``max_frames`` evenly spaced ones.
    A span shorter than one frame period uses the frame nearest its midpoint.
    """
    if max_frames < 1:
        raise ValidationError("max_frames must be >= 1")
    if span.end_s > video.duration_s + 1e-9:
        raise ValidationError(f"span {span} exceeds video duration {video.duration_s}")
    fps, last = video.fps, video.n_frames - 1
    first = max(0, math.ceil(span.start_s * fps - 1e-9))
    stop = min(last, math.ceil(span.end_s * fps - 1e-9) - 1)
    if stop < first:
        mid = (span.start_s + span.end_s) / 2 * fps
        return [int(min(last, max(0, round(mid))))]
    count = stop - first + 1
    if count <= max_frames:
        return list(range(first, stop + 1))
    return np.rint(np.linspace(first, stop, max_frames)).astype(int).tolist()


def caption_span(
    video: VideoRecord,
    span: CandidateSpan,
    backend,
    config: PipelineConfig,
    frames_root: Optional[Path] = None,
    subject: str | int | None = None,
) -> Caption:
    temp = config.temperatures.span_caption
    fp = _fingerprint(backend, VIDEO_CAPTION_PROMPT, temp)
    indices = sample_span_frames(video, span, config.max_span_frames)
    subject = subject if subject is not None else f"{span.start_s!r}-{span.end_s!r}"
    urls = []
    for j in indices:
        try:
            urls.append(frame_payload(video.frames[j], frames_root))
        except OSError as exc:
            logger.warning("%s frame %d unreadable: %s", video.video_id, j, exc)
    if not urls:
        return Caption.sentinel(subject, fp)
    text = backend.chat(span_caption_request(urls, temp)).strip()
    if not text:
        return Caption.sentinel(subject, fp)
    return Caption(subject, text, fp)
