"""Evaluation metrics for moment retrieval and highlight detection.

All values are fractions in [0, 1]. IoU thresholds use ``>=``.
"""

from __future__ import annotations

import re
from collections import Counter
from difflib import SequenceMatcher
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .errors import ValidationError

MAP_GRID: tuple[float, ...] = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
R1_THRESHOLDS: tuple[float, ...] = (0.3, 0.5, 0.7)
VERY_GOOD = 4
RARE_COUNT = 10

Span = tuple[float, float]
Pred = tuple[float, float, float]


def _spans_array(spans: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    if len(spans) == 0:
        empty = np.empty(0)
        return empty, empty
    arr = np.asarray([(float(s[0]), float(s[1])) for s in spans], dtype=np.float64)
    return np.ascontiguousarray(arr[:, 0]), np.ascontiguousarray(arr[:, 1])


def iou_matrix(a: Sequence[Sequence[float]], b: Sequence[Sequence[float]]) -> np.ndarray:
    (a0, a1), (b0, b1) = _spans_array(a), _spans_array(b)
    if a0.size == 0 or b0.size == 0:
        return np.zeros((a0.size, b0.size))
    return kernels.pairwise_iou(a0, a1, b0, b1)


def rank_predictions(preds: Sequence[Sequence[float]]) -> list[Pred]:
    """Score descending; equal scores keep their input order."""
    order = sorted(range(len(preds)), key=lambda i: -float(preds[i][2]))
    return [(float(preds[i][0]), float(preds[i][1]), float(preds[i][2])) for i in order]


def top1_iou(preds: Sequence[Sequence[float]], gts: Sequence[Span]) -> float:
    if not preds or not gts:
        return 0.0
    best = rank_predictions(preds)[0]
    return float(iou_matrix([best[:2]], gts).max())


# ---------------------------------------------------------------------------
# Moment retrieval
# ---------------------------------------------------------------------------


def _check_threshold(t: float) -> None:
    if not 0.0 < t < 1.0:
        raise ValidationError(f"IoU threshold {t} outside (0, 1)")


def _evaluable(all_gts: Sequence[Sequence[Span]]) -> list[int]:
    return [i for i, g in enumerate(all_gts) if len(g) > 0]


def r1_at(all_preds: Sequence[Sequence[Sequence[float]]], all_gts: Sequence[Sequence[Span]], n: float) -> float:
    """Fraction of queries whose top-1 prediction reaches IoU ``n`` with some ground truth."""
    _check_threshold(n)
    idx = _evaluable(all_gts)
    if not idx:
        return 0.0
    return sum(top1_iou(all_preds[i], all_gts[i]) >= n for i in idx) / len(idx)


def miou(all_preds, all_gts) -> float:
    idx = _evaluable(all_gts)
    if not idx:
        return 0.0
    return float(sum(top1_iou(all_preds[i], all_gts[i]) for i in idx) / len(idx))


def interpolated_ap(hits: Sequence[bool], n_relevant: int) -> float:
    """Area under the precision-envelope PR curve of a ranked hit list."""
    if n_relevant <= 0:
        raise ValidationError("AP needs at least one relevant item")
    hits = np.asarray(hits, dtype=bool)
    if hits.size == 0:
        return 0.0
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, hits.size + 1)
    recall = tp / n_relevant
    mprec = np.concatenate(([0.0], precision, [0.0]))
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mprec = np.maximum.accumulate(mprec[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1]) + 1
    return float(np.sum((mrec[steps] - mrec[steps - 1]) * mprec[steps]))


def match_predictions(preds: Sequence[Sequence[float]], gts: Sequence[Span], m: float) -> list[bool]:
    """True-positive flags in rank order; each ground truth matches at most once.

    A prediction takes the unmatched ground truth with the highest IoU
    (lowest index on ties) if that IoU reaches ``m``.
    """
    ranked = rank_predictions(preds)
    if not ranked:
        return []
    ious = iou_matrix([p[:2] for p in ranked], gts)
    free = np.ones(len(gts), dtype=bool)
    hits = []
    for row in ious:
        masked = np.where(free, row, -1.0)
        j = int(np.argmax(masked))
        ok = bool(free[j] and masked[j] >= m)
        if ok:
            free[j] = False
        hits.append(ok)
    return hits


def average_precision(preds, gts, m: float) -> float:
    return interpolated_ap(match_predictions(preds, gts, m), len(gts))


def map_at(all_preds, all_gts, m: float) -> float:
    _check_threshold(m)
    idx = _evaluable(all_gts)
    if not idx:
        return 0.0
    return float(np.mean([average_precision(all_preds[i], all_gts[i], m) for i in idx]))


def map_grid(all_preds, all_gts, grid: Sequence[float] = MAP_GRID) -> dict[float, float]:
    return {m: map_at(all_preds, all_gts, m) for m in grid}


def map_avg(all_preds, all_gts) -> float:
    values = map_grid(all_preds, all_gts, MAP_GRID)
    return sum(values.values()) / len(values)


# ---------------------------------------------------------------------------
# Highlight detection
# ---------------------------------------------------------------------------


def _per_clip(gt_saliency) -> np.ndarray:
    arr = np.asarray(gt_saliency)
    return arr.max(axis=1) if arr.ndim == 2 else arr


def hit_at_1(saliency_pred: Sequence[float], gt_saliency, bar: int = VERY_GOOD) -> int:
    gt = _per_clip(gt_saliency)
    if len(saliency_pred) != len(gt):
        raise ValidationError(f"{len(saliency_pred)} predicted clips vs {len(gt)} annotated clips")
    if len(gt) == 0:
        return 0
    return int(gt[int(np.argmax(np.asarray(saliency_pred, dtype=np.float64)))] >= bar)


def saliency_ap(saliency_pred: Sequence[float], gt_saliency, bar: int = VERY_GOOD) -> Optional[float]:
    """AP of clips ranked by predicted saliency; ``None`` when no clip is relevant."""
    gt = _per_clip(gt_saliency)
    if len(saliency_pred) != len(gt):
        raise ValidationError(f"{len(saliency_pred)} predicted clips vs {len(gt)} annotated clips")
    relevant = gt >= bar
    if not relevant.any():
        return None
    order = np.argsort(-np.asarray(saliency_pred, dtype=np.float64), kind="stable")
    return interpolated_ap(relevant[order], int(relevant.sum()))


def vhd_map(all_saliency, all_gt_saliency, bar: int = VERY_GOOD) -> float:
    aps = [saliency_ap(p, g, bar) for p, g in zip(all_saliency, all_gt_saliency)]
    aps = [a for a in aps if a is not None]
    return float(np.mean(aps)) if aps else 0.0


def mean_hit_at_1(all_saliency, all_gt_saliency, bar: int = VERY_GOOD) -> float:
    if not all_saliency:
        return 0.0
    return sum(hit_at_1(p, g, bar) for p, g in zip(all_saliency, all_gt_saliency)) / len(all_saliency)


# ---------------------------------------------------------------------------
# Oracle bound
# ---------------------------------------------------------------------------


def oracle_best_iou(candidates: Sequence[Sequence[float]], gts: Sequence[Span]) -> float:
    if not candidates or not gts:
        return 0.0
    return float(iou_matrix([c[:2] for c in candidates], gts).max())


def oracle_bound(
    all_candidates: Sequence[Sequence[Sequence[float]]],
    all_gts: Sequence[Sequence[Span]],
    r1_thresholds: Sequence[float] = R1_THRESHOLDS,
) -> dict[str, float]:
    """R1@n and mIoU ceilings when candidates are ranked by their true IoU."""
    idx = _evaluable(all_gts)
    best = [oracle_best_iou(all_candidates[i], all_gts[i]) for i in idx]
    out = {f"r1@{n:g}": (sum(b >= n for b in best) / len(best) if best else 0.0) for n in r1_thresholds}
    out["miou"] = float(np.mean(best)) if best else 0.0
    return out


# ---------------------------------------------------------------------------
# Query categories
# ---------------------------------------------------------------------------

STOPWORDS = frozenset(
    """
    the and for are but not you all any can had her was one our out has him his how its may new now
    old see two who did get let put say she too use that with have this will your from they been were
    what when where which while their there them then than into onto over under some such very just
    also back after before again each other more most only own same both being does doing during
    about above below between through until off down further once here why because these those
    """.split()
)

_WORD = re.compile(r"[a-z]+(?:'[a-z]+)?")


def content_words(text: str) -> list[str]:
    return [w for w in _WORD.findall(text.lower()) if len(w) >= 3 and w not in STOPWORDS]


def _norm_words(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def _near_spelling(a: str, b: str) -> bool:
    return a != b and SequenceMatcher(None, a, b).ratio() >= 0.75


def has_correction(raw: str, rewrite: str) -> bool:
    """Whether aligning ``rewrite`` to ``raw`` word-by-word shows a spelling fix.

    Replaced word pairs that are near-identical strings count as corrections;
    synonyms and rewording do not. Case and punctuation are ignored.
    """
    a, b = _norm_words(raw), _norm_words(rewrite)
    if a == b:
        return False
    for tag, i1, i2, j1, j2 in SequenceMatcher(None, a, b, autojunk=False).get_opcodes():
        if tag != "replace":
            continue
        for wa in a[i1:i2]:
            if any(_near_spelling(wa, wb) for wb in b[j1:j2]):
                return True
    return False


def word_counts(corpus: Iterable[str]) -> Counter:
    counts: Counter = Counter()
    for text in corpus:
        counts.update(content_words(text))
    return counts


def categorize_queries(
    queries: Sequence[str],
    corpus: Sequence[str],
    first_rewrites: Optional[Sequence[Optional[str]]] = None,
) -> list[set[str]]:
    """Category labels per query: a subset of {rare, error, biased} or {common}."""
    counts = word_counts(corpus)
    out = []
    for k, q in enumerate(queries):
        labels: set[str] = set()
        if any(counts[w] < RARE_COUNT for w in content_words(q)):
            labels.add("rare")
        rw = first_rewrites[k] if first_rewrites is not None else None
        if rw and has_correction(q, rw):
            labels.add("error")
        if labels:
            labels.add("biased")
        else:
            labels.add("common")
        out.append(labels)
    return out


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    n_queries: int
    r1: dict[float, float]
    miou: float
    map: dict[float, float]
    map_avg: float
    hit_at_1: Optional[float] = None
    vhd_map: Optional[float] = None
    oracle: Optional[dict[str, float]] = None
    categories: dict[str, "EvalReport"] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = list(self.r1.values()) + list(self.map.values()) + [self.miou, self.map_avg]
        values += [v for v in (self.hit_at_1, self.vhd_map) if v is not None]
        if any(not (-1e-12 <= v <= 1.0 + 1e-12) for v in values):
            raise ValidationError("metric values must lie in [0, 1]")

    def flat(self) -> dict[str, float]:
        row = {f"R1@{n:g}": v for n, v in self.r1.items()}
        row["mIoU"] = self.miou
        row.update({f"mAP@{m:g}": v for m, v in self.map.items()})
        row["mAP@avg"] = self.map_avg
        if self.hit_at_1 is not None:
            row["HIT@1"] = self.hit_at_1
        if self.vhd_map is not None:
            row["VHD mAP"] = self.vhd_map
        for k, v in (self.oracle or {}).items():
            row[f"oracle {k}"] = v
        return row

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "n_queries": self.n_queries,
            "r1": {f"{k:g}": v for k, v in self.r1.items()},
            "miou": self.miou,
            "map": {f"{k:g}": v for k, v in self.map.items()},
            "map_avg": self.map_avg,
        }
        for name in ("hit_at_1", "vhd_map", "oracle"):
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        if self.categories:
            d["categories"] = {k: v.to_dict() for k, v in sorted(self.categories.items())}
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EvalReport":
        return cls(
            n_queries=d["n_queries"],
            r1={float(k): v for k, v in d["r1"].items()},
            miou=d["miou"],
            map={float(k): v for k, v in d["map"].items()},
            map_avg=d["map_avg"],
            hit_at_1=d.get("hit_at_1"),
            vhd_map=d.get("vhd_map"),
            oracle=d.get("oracle"),
            categories={k: cls.from_dict(v) for k, v in d.get("categories", {}).items()},
        )

    def to_table(self) -> str:
        rows = [("all", self.n_queries, self.flat())]
        rows += [(k, v.n_queries, v.flat()) for k, v in sorted(self.categories.items())]
        cols = list(rows[0][2])
        header = ["split", "n"] + cols
        body = [[name, str(n)] + [f"{100 * flat.get(c, float('nan')):.2f}" for c in cols] for name, n, flat in rows]
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        fmt = lambda r: "  ".join(x.rjust(w) if i else x.ljust(w) for i, (x, w) in enumerate(zip(r, widths)))  # noqa: E731
        return "\n".join([fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in body])


def evaluate(
    all_preds: Sequence[Sequence[Sequence[float]]],
    all_gts: Sequence[Sequence[Span]],
    r1_thresholds: Sequence[float] = R1_THRESHOLDS,
    map_thresholds: Sequence[float] = MAP_GRID,
    all_saliency: Optional[Sequence[Optional[Sequence[float]]]] = None,
    all_gt_saliency: Optional[Sequence[Optional[Any]]] = None,
    all_candidates: Optional[Sequence[Sequence[Sequence[float]]]] = None,
) -> EvalReport:
    hit = vmap = None
    if all_saliency is not None and all_gt_saliency is not None:
        pairs = [(p, g) for p, g in zip(all_saliency, all_gt_saliency) if p is not None and g is not None]
        if pairs:
            ps, gs = [p for p, _ in pairs], [g for _, g in pairs]
            hit, vmap = mean_hit_at_1(ps, gs), vhd_map(ps, gs)
    grid = map_grid(all_preds, all_gts, sorted(set(map_thresholds) | set(MAP_GRID)))
    return EvalReport(
        n_queries=len(all_gts),
        r1={n: r1_at(all_preds, all_gts, n) for n in r1_thresholds},
        miou=miou(all_preds, all_gts),
        map={m: grid[m] for m in map_thresholds},
        map_avg=sum(grid[m] for m in MAP_GRID) / len(MAP_GRID),
        hit_at_1=hit,
        vhd_map=vmap,
        oracle=oracle_bound(all_candidates, all_gts, r1_thresholds) if all_candidates is not None else None,
    )
