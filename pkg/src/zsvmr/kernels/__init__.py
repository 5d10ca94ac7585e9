"""Hot numeric kernels.

The numba implementations are used by default. Set ``ZSVMR_DISABLE_NUMBA=1``
(or run without numba installed) to use the pure-numpy fallbacks; both
paths are covered by the test suite and compared in ``benchmarks/``.
"""

from __future__ import annotations

import os

from . import _numpy as numpy_kernels

_DISABLED = os.environ.get("ZSVMR_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

numba_kernels = None
if not _DISABLED:
    try:
        from . import _numba as numba_kernels  # noqa: F811
    except ImportError:  # numba missing or broken
        numba_kernels = None

active = numba_kernels if numba_kernels is not None else numpy_kernels
BACKEND = "numba" if active is numba_kernels and numba_kernels is not None else "numpy"

adaptive_threshold = active.adaptive_threshold
segment_mask = active.segment_mask
pairwise_iou = active.pairwise_iou
greedy_nms = active.greedy_nms

__all__ = [
    "BACKEND",
    "adaptive_threshold",
    "greedy_nms",
    "numba_kernels",
    "numpy_kernels",
    "pairwise_iou",
    "segment_mask",
]
