"""NumPy implementations of the threshold-scan and ranking kernels.

Same contracts as the compiled ``_kernels`` module; see ``kernels`` for the
description of each function.
"""

import numpy as np


def _cut_objectives(values, pos, w_pos, w_neg, pos_high):
    # values sorted ascending along the last axis; cut c splits [0, c) | [c, n)
    n = values.shape[-1]
    pos = pos.astype(np.int64)
    zeros = np.zeros(values.shape[:-1] + (1,), dtype=np.int64)
    pos_below = np.concatenate([zeros, np.cumsum(pos, axis=-1)], axis=-1)
    neg_below = np.arange(n + 1, dtype=np.int64) - pos_below
    P = pos_below[..., -1:]
    N = neg_below[..., -1:]
    if pos_high:
        obj = w_pos * (P - pos_below) + w_neg * neg_below
    else:
        obj = w_pos * pos_below + w_neg * (N - neg_below)
    valid = np.ones(obj.shape, dtype=bool)
    valid[..., 1:n] = values[..., :-1] < values[..., 1:]
    return np.where(valid, obj, -1)


def best_cut(values, pos, w_pos, w_neg, pos_high):
    obj = _cut_objectives(np.asarray(values, dtype=np.float64), np.asarray(pos), int(w_pos),
                          int(w_neg), bool(pos_high))
    c = int(np.argmax(obj))
    return c, int(obj[c])


def best_cuts_rows(values, pos, w_pos, w_neg, pos_high):
    w_pos = np.asarray(w_pos, dtype=np.int64)[:, None]
    w_neg = np.asarray(w_neg, dtype=np.int64)[:, None]
    obj = _cut_objectives(np.asarray(values, dtype=np.float64), np.asarray(pos), w_pos, w_neg,
                          bool(pos_high))
    return np.argmax(obj, axis=1).astype(np.int64)


def average_precision_desc(scores, pos):
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(pos).astype(np.int64)
    total = int(pos.sum())
    if total == 0:
        return float("nan")
    ends = np.flatnonzero(np.append(scores[1:] != scores[:-1], True))
    tp_cum = np.cumsum(pos)[ends]
    count = ends + 1
    tp_group = np.diff(np.concatenate([[0], tp_cum]))
    terms = tp_group * (tp_cum / count)
    # cumsum adds left to right, matching the compiled loop bit for bit
    return float(np.cumsum(terms)[-1]) / total
