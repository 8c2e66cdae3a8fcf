"""Numpy fallback for the compiled kernels; same signatures and results."""

import numpy as np


def backward_sweep(values0, cost, idx, weight, n_steps, stride, n_threads=1):
    cur = np.array(values0, dtype=np.float64)
    records = [cur.copy()]
    inc_min, inc_max = np.inf, -np.inf
    for k in range(1, n_steps + 1):
        cand = cost + np.einsum("cuj,cuj->cu", weight, cur[idx])
        nxt = cand.min(axis=1)
        diff = nxt - cur
        inc_min = min(inc_min, float(diff.min()))
        inc_max = max(inc_max, float(diff.max()))
        cur = nxt
        if k % stride == 0 or k == n_steps:
            records.append(cur.copy())
    return np.array(records), inc_min, inc_max


def min_closure(q, dest, max_iter):
    out = np.array(q, dtype=np.float64)
    valid = dest >= 0
    safe = np.where(valid, dest, 0)
    it = 0
    while it < max_iter:
        it += 1
        nb = np.where(valid, out[safe], np.inf).min(axis=1)
        new = np.minimum(out, nb)
        if np.array_equal(new, out):
            break
        out = new
    return out, it
