"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--pool 30000] [--shadows 30] [--scores 1000000]

Inputs are pre-sorted so only the scans are timed. Both backends must return
identical results; the script exits non-zero if they do not.
"""

import argparse
import sys
import timeit

import numpy as np

from bayesmia import _kernels_py

try:
    from bayesmia import _kernels
except ImportError:
    _kernels = None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--pool", type=int, default=30_000)
    ap.add_argument("--shadows", type=int, default=30)
    ap.add_argument("--scores", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation`")
        return 1

    rng = np.random.default_rng(0)
    L = np.sort(rng.exponential(size=(args.pool, args.shadows)), axis=1)
    M = rng.integers(0, 2, size=L.shape).astype(np.uint8)
    M[:, 0], M[:, -1] = 1, 0
    n_in = M.sum(axis=1)
    n_out = args.shadows - n_in
    s = np.sort(rng.normal(size=args.scores))
    t = rng.integers(0, 2, size=args.scores).astype(np.uint8)
    s_desc = s[::-1].copy()

    cases = {
        "per-sample thresholds": lambda k: k.best_cuts_rows(L, M, n_out, n_in, False),
        "global threshold scan": lambda k: k.best_cut(s, t, 1, 1, True),
        "average precision": lambda k: k.average_precision_desc(s_desc, t),
    }
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'cython [ms]':>13}{'speedup':>9}")
    ok = True
    for name, fn in cases.items():
        a, b = fn(_kernels_py), fn(_kernels)
        ok &= bool(np.all(np.asarray(a) == np.asarray(b)))
        tp = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        tc = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<24}{tp:>12.2f}{tc:>13.2f}{tp / tc:>8.1f}x")
    if not ok:
        print("backends disagree", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
