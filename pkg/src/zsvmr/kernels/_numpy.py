"""Pure-numpy kernels. Same contracts as the numba versions."""

from __future__ import annotations

import numpy as np


def adaptive_threshold(row: np.ndarray, eta: int, kappa: int, eps: float) -> float:
    n = row.shape[0]
    lo = float(row.min())
    hi = float(row.max())
    if n < kappa or hi == lo:
        return lo - eps
    width = hi - lo
    edges = lo + width * np.arange(eta, dtype=np.int64) / eta
    ordered = np.sort(row)
    # values >= edge, for every edge at once
    counts = n - np.searchsorted(ordered, edges, side="left")
    hits = np.flatnonzero(counts >= kappa)
    if hits.size == 0:
        return lo - eps
    return float(edges[hits[-1]])


def segment_mask(mask: np.ndarray, tau: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    gaps = np.diff(idx) - 1
    breaks = np.flatnonzero(gaps >= tau)
    starts = idx[np.concatenate(([0], breaks + 1))]
    lasts = idx[np.concatenate((breaks, [idx.size - 1]))]
    return starts.astype(np.int64), lasts.astype(np.int64)


def pairwise_iou(a_start, a_end, b_start, b_end) -> np.ndarray:
    a_start = np.asarray(a_start, dtype=np.float64)[:, None]
    a_end = np.asarray(a_end, dtype=np.float64)[:, None]
    b_start = np.asarray(b_start, dtype=np.float64)[None, :]
    b_end = np.asarray(b_end, dtype=np.float64)[None, :]
    inter = np.clip(np.minimum(a_end, b_end) - np.maximum(a_start, b_start), 0.0, None)
    union = (a_end - a_start) + (b_end - b_start) - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def greedy_nms(starts: np.ndarray, ends: np.ndarray, sigma: float) -> np.ndarray:
    """Indices kept by greedy suppression; input is already in priority order.

    A span is dropped when its IoU with a kept span exceeds ``sigma`` or when it
    duplicates a kept span exactly, so ``sigma=1`` still removes duplicates.
    """
    n = starts.shape[0]
    alive = np.ones(n, dtype=bool)
    keep = []
    for i in range(n):
        if not alive[i]:
            continue
        keep.append(i)
        rest = np.arange(i + 1, n)
        if rest.size:
            inter = np.clip(np.minimum(ends[i], ends[rest]) - np.maximum(starts[i], starts[rest]), 0.0, None)
            union = (ends[i] - starts[i]) + (ends[rest] - starts[rest]) - inter
            dup = (starts[rest] == starts[i]) & (ends[rest] == ends[i])
            alive[rest[(inter / union > sigma) | dup]] = False
    return np.asarray(keep, dtype=np.int64)
