"""Annotation loaders, frame manifests and synthetic datasets.

Supported formats:

* Charades-STA: text lines ``<video_id> <start> <end>##<query>``.
* QVHighlights: JSONL objects with ``qid, query, vid, duration,
  relevant_windows`` and optional ``relevant_clip_ids, saliency_scores``.
* ActivityNet Captions: one JSON object mapping video id to
  ``{duration, timestamps, sentences}``.

Frames live at ``<frames_root>/<video_id>/<index>.jpg`` with indices from 0.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .backends.synthetic import VideoPlan, frame_url
from .core import DEFAULT_FPS, QueryRecord, VideoRecord
from .errors import DatasetFormatError, ValidationError

logger = logging.getLogger(__name__)

FORMATS = ("charades_sta", "qvhighlights", "activitynet", "synthetic")
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".webp")


@dataclass(frozen=True)
class VideoStub:
    """What an annotation file says about a video, before frames are attached."""

    video_id: str
    duration_s: float
    fps: float


Pairs = list[tuple[VideoStub, QueryRecord]]


@dataclass
class Dataset:
    name: str
    videos: dict[str, VideoRecord]
    queries: list[QueryRecord]
    missing_frames: list[str] = field(default_factory=list)
    plans: dict[str, VideoPlan] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for q in self.queries:
            if q.video_id in self.videos:
                q.check_against(self.videos[q.video_id].duration_s)

    def runnable(self) -> list[QueryRecord]:
        return [q for q in self.queries if q.video_id in self.videos]


def _fail(msg: str, path: str, line: Optional[int], lenient: bool) -> None:
    err = DatasetFormatError(msg, path, line)
    if not lenient:
        raise err
    logger.warning("skipping: %s", err)


def _merge_stub(stubs: dict[str, VideoStub], stub: VideoStub) -> None:
    old = stubs.get(stub.video_id)
    if old is None or stub.duration_s > old.duration_s:
        stubs[stub.video_id] = stub


# ---------------------------------------------------------------------------
# Charades-STA
# ---------------------------------------------------------------------------

_CHARADES = re.compile(r"^(\S+)\s+(\S+)\s+(\S+?)\s*$")


def parse_charades_sta(text: str, path: str = "", lenient: bool = False, fps: float = DEFAULT_FPS["charades_sta"]) -> Pairs:
    """Parse Charades-STA lines.

    The format carries no durations, so each stub's duration is the latest
    span end seen for that video; :func:`attach_frames` extends it to cover
    the extracted frames. Query ids are ``<video_id>#<k>``, with ``k``
    counting that video's queries in file order.
    """
    rows: list[tuple[str, float, float, str]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        head, sep, query = line.partition("##")
        m = _CHARADES.match(head)
        if not sep:
            _fail("missing '##' separator", path, lineno, lenient)
            continue
        if not m:
            _fail("expected '<video_id> <start> <end>' before '##'", path, lineno, lenient)
            continue
        try:
            start, end = float(m.group(2)), float(m.group(3))
        except ValueError:
            _fail("start/end are not numbers", path, lineno, lenient)
            continue
        if not query.strip() or not (0 <= start < end):
            _fail(f"invalid span ({start}, {end}) or empty query", path, lineno, lenient)
            continue
        rows.append((m.group(1), start, end, query.strip()))
    seen: dict[str, int] = {}
    durations: dict[str, float] = {}
    for vid, _, end, _ in rows:
        durations[vid] = max(durations.get(vid, 0.0), end)
    out: Pairs = []
    for vid, start, end, query in rows:
        k = seen.get(vid, 0)
        seen[vid] = k + 1
        stub = VideoStub(vid, durations[vid], fps)
        out.append((stub, QueryRecord(f"{vid}#{k}", vid, query, ((start, end),))))
    return out


def load_charades_sta(path: str | Path, lenient: bool = False, fps: float = DEFAULT_FPS["charades_sta"]) -> Pairs:
    return parse_charades_sta(Path(path).read_text(encoding="utf-8"), str(path), lenient, fps)


def dump_charades_sta(pairs: Iterable[tuple[VideoStub, QueryRecord]]) -> str:
    lines = []
    for _, q in pairs:
        for s, e in q.gt_spans:
            lines.append(f"{q.video_id} {s!r} {e!r}##{q.raw_text}")
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# QVHighlights
# ---------------------------------------------------------------------------

_QVH_REQUIRED = ("qid", "query", "vid", "duration", "relevant_windows")


def parse_qvhighlights(text: str, path: str = "", lenient: bool = False, fps: float = DEFAULT_FPS["qvhighlights"]) -> Pairs:
    out: Pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            _fail(f"invalid JSON: {exc.msg}", path, lineno, lenient)
            continue
        if not isinstance(obj, dict):
            _fail("expected a JSON object", path, lineno, lenient)
            continue
        missing = [k for k in _QVH_REQUIRED if k not in obj]
        if missing:
            _fail(f"missing field {missing[0]!r}", path, lineno, lenient)
            continue
        try:
            duration = float(obj["duration"])
            q = QueryRecord(
                qid=str(obj["qid"]),
                video_id=str(obj["vid"]),
                raw_text=obj["query"],
                gt_spans=tuple((w[0], w[1]) for w in obj["relevant_windows"]),
                gt_saliency=obj.get("saliency_scores"),
                saliency_clip_ids=obj.get("relevant_clip_ids"),
            )
            q.check_against(duration)
        except (ValidationError, TypeError, ValueError, IndexError) as exc:
            _fail(str(exc), path, lineno, lenient)
            continue
        out.append((VideoStub(q.video_id, duration, fps), q))
    return out


def load_qvhighlights(path: str | Path, lenient: bool = False, fps: float = DEFAULT_FPS["qvhighlights"]) -> Pairs:
    return parse_qvhighlights(Path(path).read_text(encoding="utf-8"), str(path), lenient, fps)


def dump_qvhighlights(pairs: Iterable[tuple[VideoStub, QueryRecord]]) -> str:
    lines = []
    for stub, q in pairs:
        obj: dict[str, Any] = {
            "qid": q.qid,
            "query": q.raw_text,
            "duration": stub.duration_s,
            "vid": q.video_id,
            "relevant_windows": [list(s) for s in q.gt_spans],
        }
        if q.saliency_clip_ids is not None:
            obj["relevant_clip_ids"] = list(q.saliency_clip_ids)
        if q.gt_saliency is not None:
            obj["saliency_scores"] = [list(c) for c in q.gt_saliency]
        lines.append(json.dumps(obj, ensure_ascii=False))
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# ActivityNet Captions
# ---------------------------------------------------------------------------


def parse_activitynet(text: str, path: str = "", lenient: bool = False, fps: float = DEFAULT_FPS["activitynet"]) -> Pairs:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    if not isinstance(data, dict):
        raise DatasetFormatError("expected an object keyed by video id", path)
    out: Pairs = []
    for vid, entry in data.items():
        try:
            duration = float(entry["duration"])
            stamps, sentences = entry["timestamps"], entry["sentences"]
        except (KeyError, TypeError, ValueError) as exc:
            _fail(f"video {vid!r}: bad entry ({exc})", path, None, lenient)
            continue
        if len(stamps) != len(sentences):
            _fail(f"video {vid!r}: {len(stamps)} timestamps but {len(sentences)} sentences", path, None, lenient)
            continue
        pairs: Pairs = []
        try:
            stub = VideoStub(vid, duration, fps)
            for k, (ts, sent) in enumerate(zip(stamps, sentences)):
                q = QueryRecord(f"{vid}#{k}", vid, sent.strip(), ((ts[0], ts[1]),))
                q.check_against(duration)
                pairs.append((stub, q))
        except (ValidationError, TypeError, ValueError, IndexError, AttributeError) as exc:
            _fail(f"video {vid!r}: {exc}", path, None, lenient)
            continue
        out.extend(pairs)
    return out


def load_activitynet(path: str | Path, lenient: bool = False, fps: float = DEFAULT_FPS["activitynet"]) -> Pairs:
    return parse_activitynet(Path(path).read_text(encoding="utf-8"), str(path), lenient, fps)


def dump_activitynet(pairs: Iterable[tuple[VideoStub, QueryRecord]]) -> str:
    data: dict[str, dict[str, Any]] = {}
    for stub, q in pairs:
        entry = data.setdefault(q.video_id, {"duration": stub.duration_s, "timestamps": [], "sentences": []})
        for s, e in q.gt_spans:
            entry["timestamps"].append([s, e])
            entry["sentences"].append(q.raw_text)
    return json.dumps(data, ensure_ascii=False, indent=1) + "\n"


# ---------------------------------------------------------------------------
# Frame manifests
# ---------------------------------------------------------------------------


def frame_files(directory: Path) -> list[Path]:
    """Numerically named images in ``directory``, checked to be 0..L-1 without gaps."""
    numbered = {}
    for p in directory.iterdir():
        if p.suffix.lower() in IMAGE_SUFFIXES and p.stem.isdigit():
            numbered[int(p.stem)] = p
    if not numbered:
        return []
    expected = set(range(len(numbered)))
    if set(numbered) != expected:
        gaps = sorted(expected - set(numbered))[:5]
        raise DatasetFormatError(f"frame indices are not contiguous from 0 (missing e.g. {gaps})", str(directory))
    return [numbered[i] for i in range(len(numbered))]


def attach_frames(stubs: Iterable[VideoStub], frames_root: str | Path) -> tuple[dict[str, VideoRecord], list[str]]:
    root = Path(frames_root)
    videos: dict[str, VideoRecord] = {}
    missing: list[str] = []
    for stub in stubs:
        directory = root / stub.video_id
        files = frame_files(directory) if directory.is_dir() else []
        if not files:
            missing.append(stub.video_id)
            continue
        # the annotation may understate the duration (Charades carries none)
        duration = max(stub.duration_s, len(files) / stub.fps)
        n = min(len(files), math.ceil(duration * stub.fps - 1e-9))
        videos[stub.video_id] = VideoRecord(stub.video_id, duration, stub.fps, tuple(str(f) for f in files[:n]))
    return videos, missing


def _unique_stubs(pairs: Pairs) -> list[VideoStub]:
    stubs: dict[str, VideoStub] = {}
    for stub, _ in pairs:
        _merge_stub(stubs, stub)
    return [stubs[k] for k in sorted(stubs)]


def build_dataset(name: str, pairs: Pairs, frames_root: str | Path) -> Dataset:
    videos, missing = attach_frames(_unique_stubs(pairs), frames_root)
    if missing:
        logger.warning("%d videos have no frames under %s", len(missing), frames_root)
    return Dataset(name, videos, [q for _, q in pairs], missing_frames=missing)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

SUBJECTS = ("person", "man", "woman", "child", "girl", "boy")
VERBS = ("opens", "closes", "holds", "washes", "throws", "carries", "cleans", "fixes", "lifts", "drops", "paints", "reads")
OBJECTS = ("door", "window", "cup", "book", "towel", "laptop", "bag", "box", "broom", "pillow", "phone", "sandwich")
D_NOUNS = ("dog", "cat", "bird", "car", "tree", "river", "crowd", "train", "horse", "bicycle", "truck", "boat")
D_VERBS = ("sits", "waits", "runs", "rests", "moves", "sleeps", "stands", "turns", "glides", "drifts")
D_PLACES = ("park", "street", "garden", "beach", "station", "field", "market", "bridge", "harbor", "meadow")

SPAN_GAP_S = 10.0
SPAN_LEN_S = (10.0, 30.0)


def _typo(word: str, rng: np.random.Generator) -> str:
    i = int(rng.integers(1, len(word) - 2))
    return word[:i] + word[i + 1] + word[i] + word[i + 2 :]


def _place_spans(duration: float, k: int, rng: np.random.Generator) -> list[tuple[float, float]]:
    lengths = rng.uniform(*SPAN_LEN_S, size=k)
    free = duration - lengths.sum() - SPAN_GAP_S * (k - 1) - 1.0
    while free < 0 and k > 1:
        k -= 1
        lengths = lengths[:k]
        free = duration - lengths.sum() - SPAN_GAP_S * (k - 1) - 1.0
    if free < 0:
        lengths = np.array([duration / 2])
        free = duration / 2 - 1.0
    cuts = np.sort(rng.uniform(0, free, size=k + 1))
    offsets = np.diff(np.concatenate(([0.0], cuts)))[:k]
    spans = []
    t = 0.0
    for off, length in zip(offsets, lengths):
        start = math.floor((t + off) * 10) / 10
        end = math.floor((start + length) * 10) / 10
        spans.append((start, min(end, duration)))
        t = end + SPAN_GAP_S
    return spans


def generate_synthetic(
    seed: int = 0,
    n_videos: int = 50,
    duration_range: tuple[float, float] = (60.0, 120.0),
    spans_per_video: tuple[int, int] = (1, 2),
    typo_rate: float = 0.2,
    fps: float = DEFAULT_FPS["synthetic"],
) -> Dataset:
    """A seeded dataset with planted spans and the plans that drive the synthetic backend.

    Each video carries one query; its ground truth is every planted span.
    Some raw queries get a transposed-letter typo that the synthetic debias
    reply corrects. Saliency is 4 inside planted spans and 0 elsewhere.
    """
    rng = np.random.default_rng(seed)
    videos: dict[str, VideoRecord] = {}
    queries: list[QueryRecord] = []
    plans: dict[str, VideoPlan] = {}
    for v in range(n_videos):
        vid = f"synth{v:04d}"
        duration = round(float(rng.uniform(*duration_range)), 1)
        k = int(rng.integers(spans_per_video[0], spans_per_video[1] + 1))
        spans = _place_spans(duration, k, rng)
        subj, verb, obj = (str(rng.choice(x)) for x in (SUBJECTS, VERBS, OBJECTS))
        phrase = f"{subj} {verb} a {obj}"
        raw = phrase
        if rng.random() < typo_rate:
            words = phrase.split()
            target = int(rng.choice([i for i, w in enumerate(words) if len(w) >= 4]))
            words[target] = _typo(words[target], rng)
            raw = " ".join(words)
        n_scenes = int(rng.integers(4, 7))
        distractors = tuple(
            f"a {rng.choice(D_NOUNS)} {rng.choice(D_VERBS)} near the {rng.choice(D_PLACES)}" for _ in range(n_scenes)
        )
        plan = VideoPlan(vid, duration, fps, tuple(spans), phrase, raw, distractors, int(rng.integers(6, 13)))
        n = plan.n_frames
        plans[vid] = plan
        videos[vid] = VideoRecord(vid, duration, fps, tuple(frame_url(vid, j) for j in range(n)))
        saliency = tuple((4, 4, 4) if plan.inside(j) else (0, 0, 0) for j in range(n))
        queries.append(QueryRecord(f"{vid}#0", vid, raw, tuple(spans), gt_saliency=saliency))
    return Dataset("synthetic", videos, queries, plans=plans)


def save_synthetic(ds: Dataset, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pairs = [(VideoStub(q.video_id, ds.videos[q.video_id].duration_s, ds.videos[q.video_id].fps), q) for q in ds.queries]
    (directory / "annotations.jsonl").write_text(dump_qvhighlights(pairs), encoding="utf-8")
    plans = {k: ds.plans[k].to_dict() for k in sorted(ds.plans)}
    (directory / "plans.json").write_text(json.dumps(plans, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_synthetic(directory: str | Path) -> Dataset:
    directory = Path(directory)
    plans = {k: VideoPlan.from_dict(v) for k, v in json.loads((directory / "plans.json").read_text(encoding="utf-8")).items()}
    pairs = load_qvhighlights(directory / "annotations.jsonl")
    videos = {}
    for vid, plan in plans.items():
        videos[vid] = VideoRecord(vid, plan.duration_s, plan.fps, tuple(frame_url(vid, j) for j in range(plan.n_frames)))
    return Dataset("synthetic", videos, [q for _, q in pairs], plans=plans)


def load_dataset(
    fmt: str,
    path: str | Path,
    frames_root: Optional[str | Path] = None,
    lenient: bool = False,
    fps: Optional[float] = None,
) -> Dataset:
    if fmt == "synthetic":
        return load_synthetic(path)
    loaders = {"charades_sta": load_charades_sta, "qvhighlights": load_qvhighlights, "activitynet": load_activitynet}
    if fmt not in loaders:
        raise ValidationError(f"unknown dataset format {fmt!r}; expected one of {FORMATS}")
    if frames_root is None:
        raise ValidationError(f"{fmt} needs a frames root")
    fps = fps if fps is not None else DEFAULT_FPS[fmt]
    return build_dataset(fmt, loaders[fmt](path, lenient=lenient, fps=fps), frames_root)


def queries_by_id(queries: Sequence[QueryRecord]) -> dict[str, QueryRecord]:
    out: dict[str, QueryRecord] = {}
    for q in queries:
        if q.qid in out:
            raise ValidationError(f"duplicate qid {q.qid!r}")
        out[q.qid] = q
    return out
