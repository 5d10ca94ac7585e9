"""numba-compiled kernels. Same contracts as ``_numpy``."""

from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(cache=True)
def adaptive_threshold(row, eta, kappa, eps):
    n = row.shape[0]
    lo = row.min()
    hi = row.max()
    if n < kappa or hi == lo:
        return lo - eps
    width = hi - lo
    for k in range(eta - 1, -1, -1):
        edge = lo + width * k / eta
        count = 0
        for j in range(n):
            if row[j] >= edge:
                count += 1
        if count >= kappa:
            return edge
    return lo - eps


@nb.njit(cache=True)
def segment_mask(mask, tau):
    n = mask.shape[0]
    starts = np.empty(n, dtype=np.int64)
    lasts = np.empty(n, dtype=np.int64)
    count = 0
    is_open = False
    first = 0
    last = 0
    gap = 0
    for j in range(n):
        if mask[j]:
            if not is_open:
                is_open = True
                first = j
            last = j
            gap = 0
        elif is_open:
            gap += 1
            if gap >= tau:
                starts[count] = first
                lasts[count] = last
                count += 1
                is_open = False
                gap = 0
    if is_open:
        starts[count] = first
        lasts[count] = last
        count += 1
    return starts[:count], lasts[:count]


@nb.njit(cache=True)
def pairwise_iou(a_start, a_end, b_start, b_end):
    out = np.zeros((a_start.shape[0], b_start.shape[0]))
    for i in range(a_start.shape[0]):
        for j in range(b_start.shape[0]):
            inter = min(a_end[i], b_end[j]) - max(a_start[i], b_start[j])
            if inter <= 0.0:
                continue
            union = (a_end[i] - a_start[i]) + (b_end[j] - b_start[j]) - inter
            if union > 0.0:
                out[i, j] = inter / union
    return out


@nb.njit(cache=True)
def greedy_nms(starts, ends, sigma):
    n = starts.shape[0]
    alive = np.ones(n, dtype=np.bool_)
    keep = np.empty(n, dtype=np.int64)
    count = 0
    for i in range(n):
        if not alive[i]:
            continue
        keep[count] = i
        count += 1
        for j in range(i + 1, n):
            if not alive[j]:
                continue
            inter = min(ends[i], ends[j]) - max(starts[i], starts[j])
            if inter <= 0.0:
                continue
            union = (ends[i] - starts[i]) + (ends[j] - starts[j]) - inter
            if inter / union > sigma or (starts[j] == starts[i] and ends[j] == ends[i]):
                alive[j] = False
    return keep[:count]
