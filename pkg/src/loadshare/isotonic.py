"""Weighted isotonic regression under a simple (total) order."""

from __future__ import annotations

import numpy as np


def isotonic_nondecreasing(values, weights=None) -> np.ndarray:
    """Weighted least-squares projection of ``values`` onto non-decreasing sequences.

    Pool-adjacent-violators with block merging.  Adjacent blocks whose means
    are out of order or tied are merged, so every output block has a mean
    strictly larger than its left neighbour.

    Parameters
    ----------
    values : array_like, shape (K,)
    weights : array_like, shape (K,), optional
        Strictly positive weights; defaults to ones.

    Returns
    -------
    ndarray, shape (K,)
    """
    g = np.asarray(values, dtype=float)
    if g.ndim != 1:
        raise ValueError("values must be one-dimensional")
    if g.size == 0:
        raise ValueError("isotonic regression of an empty series")
    w = np.ones_like(g) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != g.shape:
        raise ValueError("values and weights differ in length")
    if not np.all(w > 0):
        raise ValueError("weights must be strictly positive")
    if not np.all(np.isfinite(g)):
        raise ValueError("values must be finite")

    # block means, weights and lengths, as a stack
    means: list[float] = []
    wts: list[float] = []
    lens: list[int] = []
    for gi, wi in zip(g.tolist(), w.tolist()):
        m, ww, ln = gi, wi, 1
        while means and means[-1] >= m:
            pm, pw, pl = means.pop(), wts.pop(), lens.pop()
            tot = pw + ww
            m = (pm * pw + m * ww) / tot
            ww = tot
            ln += pl
        means.append(m)
        wts.append(ww)
        lens.append(ln)
    return np.repeat(means, lens)


def pooled_blocks(fitted) -> list[slice]:
    """Slices of maximal runs of equal values in a fitted isotonic sequence."""
    f = np.asarray(fitted)
    edges = [0] + [i for i in range(1, f.size) if f[i] != f[i - 1]] + [f.size]
    return [slice(a, b) for a, b in zip(edges, edges[1:])]
