"""Compare the numba kernels against the pure-numpy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 20] [--sizes 33 200 2000]

Each kernel is run once on both paths (compiling the numba versions and
checking that the outputs agree), then timed with ``timeit``; the table
reports the best of ``--repeat`` runs per call.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from zsvmr.kernels import _numba as nb_k
from zsvmr.kernels import _numpy as np_k


def _cases(n: int, rng: np.random.Generator):
    row = rng.uniform(-1, 1, n)
    mask = row > 0.3
    k = max(4, n // 10)
    s = np.sort(rng.uniform(0, n, k))
    e = s + rng.uniform(1, n / 10 + 1, k)
    return {
        "adaptive_threshold": (row, 10, 7, 1e-9),
        "segment_mask": (mask, 5),
        "pairwise_iou": (s, e, s.copy(), e.copy()),
        "greedy_nms": (s, e, 0.5),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return bool(np.allclose(a, b, rtol=0, atol=1e-12))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[33, 200, 2000, 20000])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<20} {'n':>7} {'numpy (us)':>12} {'numba (us)':>12} {'speedup':>8}")
    for n in args.sizes:
        for name, call_args in _cases(n, rng).items():
            fast, slow = getattr(nb_k, name), getattr(np_k, name)
            if not _same(fast(*call_args), slow(*call_args)):
                raise SystemExit(f"{name} (n={n}): numba and numpy disagree")
            number = 5
            t_np = min(timeit.repeat(lambda: slow(*call_args), number=number, repeat=args.repeat)) / number
            t_nb = min(timeit.repeat(lambda: fast(*call_args), number=number, repeat=args.repeat)) / number
            print(f"{name:<20} {n:>7} {t_np * 1e6:>12.1f} {t_nb * 1e6:>12.1f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
