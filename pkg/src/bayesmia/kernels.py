"""Inner-loop kernels, compiled when available.

The Cython module ``_kernels`` is used if it was built; otherwise, or when
``BAYESMIA_PURE_PYTHON=1`` is set, the NumPy fallback is used. ``BACKEND``
names the active implementation.

``best_cut(values, pos, w_pos, w_neg, pos_high)``
    ``values`` sorted ascending, ``pos`` marks positives. A cut ``c`` in
    ``0..n`` separates ``values[:c]`` from ``values[c:]`` and is only allowed
    between distinct values. With ``pos_high`` the upper side is predicted
    positive, otherwise the lower side is. Returns the cut maximizing
    ``w_pos * TP + w_neg * TN`` (smallest cut on ties) and that objective.
    All arithmetic is integer, so both backends agree exactly.

``best_cuts_rows(values, pos, w_pos, w_neg, pos_high)``
    Row-wise ``best_cut`` over 2-d arrays with per-row integer weights.

``average_precision_desc(scores, pos)``
    Average precision of a ranking sorted by descending score; tied scores
    are one threshold step.
"""

import os

from . import _kernels_py

if os.environ.get("BAYESMIA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

best_cut = _impl.best_cut
best_cuts_rows = _impl.best_cuts_rows
average_precision_desc = _impl.average_precision_desc
