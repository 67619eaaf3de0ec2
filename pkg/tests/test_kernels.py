import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayesmia import _kernels_py, kernels
from bayesmia.evaluation import best_threshold_accuracy, mean_average_precision

try:
    from bayesmia import _kernels as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

needs_compiled = pytest.mark.skipif(_compiled is None, reason="compiled kernels not built")


def brute_cut(values, pos, w_pos, w_neg, pos_high):
    n = len(values)
    best, best_c = None, None
    for c in range(n + 1):
        if 0 < c < n and values[c - 1] == values[c]:
            continue
        lower, upper = pos[:c], pos[c:]
        if pos_high:
            obj = w_pos * int(upper.sum()) + w_neg * int((1 - lower).sum())
        else:
            obj = w_pos * int(lower.sum()) + w_neg * int((1 - upper).sum())
        if best is None or obj > best:
            best, best_c = obj, c
    return best_c, best


sorted_instances = st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=1, max_size=30).map(
    lambda xs: (np.array(sorted(v for v, _ in xs), dtype=float),
                np.array([p for _, p in xs], dtype=np.uint8)))


@settings(max_examples=300, deadline=None)
@given(sorted_instances, st.integers(1, 5), st.integers(1, 5), st.booleans())
def test_best_cut_matches_brute_force(inst, w_pos, w_neg, pos_high):
    v, p = inst
    expected = brute_cut(v, p, w_pos, w_neg, pos_high)
    assert tuple(_kernels_py.best_cut(v, p, w_pos, w_neg, pos_high)) == expected
    if _compiled is not None:
        assert tuple(_compiled.best_cut(v, p, w_pos, w_neg, pos_high)) == expected


@needs_compiled
@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(1, 20), st.integers(0, 2**32 - 1), st.booleans())
def test_rows_parity(rows, cols, seed, pos_high):
    rng = np.random.default_rng(seed)
    v = np.sort(rng.integers(0, 4, size=(rows, cols)).astype(float), axis=1)
    p = rng.integers(0, 2, size=(rows, cols)).astype(np.uint8)
    wp = rng.integers(1, 6, size=rows).astype(np.int64)
    wn = rng.integers(1, 6, size=rows).astype(np.int64)
    a = _kernels_py.best_cuts_rows(v, p, wp, wn, pos_high)
    b = _compiled.best_cuts_rows(v, p, wp, wn, pos_high)
    np.testing.assert_array_equal(a, b)
    for r in range(rows):
        assert a[r] == brute_cut(v[r], p[r], int(wp[r]), int(wn[r]), pos_high)[0]


@needs_compiled
@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(-3, 3), st.booleans()), min_size=1, max_size=40))
def test_average_precision_parity(xs):
    s = np.array(sorted((float(v) for v, _ in xs), reverse=True))
    p = np.array([b for _, b in xs], dtype=np.uint8)
    if not p.any():
        return
    a = _kernels_py.average_precision_desc(s, p)
    b = _compiled.average_precision_desc(s, p)
    assert a == b  # bit-identical by construction


def test_large_random_parity(rng, kernel_impl):
    s = rng.normal(size=50_000).round(2)
    t = rng.random(50_000) < 0.4
    acc = best_threshold_accuracy(s, t)
    ap = mean_average_precision(s, t)
    kernels.best_cut = _kernels_py.best_cut
    kernels.average_precision_desc = _kernels_py.average_precision_desc
    assert best_threshold_accuracy(s, t) == acc
    assert mean_average_precision(s, t) == ap


def test_backend_selection_env():
    code = "import bayesmia.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, BAYESMIA_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in ("python", "cython")
