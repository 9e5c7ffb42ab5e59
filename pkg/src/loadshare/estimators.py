"""Maximum-likelihood estimators for the CPHR load-sharing model.

Unrestricted estimates have the closed form ``m / D`` where ``m`` counts how
often a component failed at a level and ``D`` is its cumulative-hazard exposure
at that level.  Order-restricted estimates force ``alpha[j, 1] <= ... <=
alpha[j, s]`` and come from an isotonic regression of the reciprocals, with the
counts as weights.

Missing estimates (zero counts) are NaN, never 0.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np

from .isotonic import isotonic_nondecreasing, pooled_blocks
from .model import (
    Baseline,
    BaselineSpec,
    Dataset,
    ParamTable,
    Transform,
    location_scale,
    scale_family,
)


class EstimationError(RuntimeError):
    """Internal inconsistency, e.g. a positive count with zero exposure."""


@dataclass
class CountTable:
    """Failure bookkeeping for a dataset.

    Attributes
    ----------
    m : ndarray, shape (n, s)
        ``m[j-1, k-1]`` = number of trials in which component ``j`` failed at level ``k``.
    alive : ndarray, shape (r, s + 1, n)
        ``alive[i, k, j-1]`` = 1 if component ``j`` survived the first ``k``
        failures of trial ``i``; ``alive[:, 0, :]`` is all ones.
    sequence : dict
        ``(j, prefix) -> count`` where ``prefix`` holds the earlier sources in
        chronological order.
    """

    m: np.ndarray
    alive: np.ndarray
    sequence: dict[tuple[int, tuple[int, ...]], int]

    @property
    def r(self) -> int:
        return self.alive.shape[0]


@dataclass
class EstimateResult:
    """Fitted parameters plus the bookkeeping they were computed from.

    ``params`` is the estimate named by ``method``; ``unrestricted`` always
    holds the closed-form unrestricted estimates of the same fit.  For scale
    and location-scale fits, ``targets == "rate*alpha"``.
    """

    method: str
    params: ParamTable
    unrestricted: ParamTable
    counts: CountTable
    denominators: np.ndarray
    mu: np.ndarray | None = None
    targets: str = "alpha"

    @property
    def exists(self) -> np.ndarray:
        return self.params.exists

    @property
    def component_exists(self) -> np.ndarray:
        return self.params.exists.all(axis=1)


@dataclass
class PooledEstimate:
    """Per-level estimates of the pooled (homogeneous-component) model."""

    unrestricted: np.ndarray
    restricted: np.ndarray


# ---------------------------------------------------------------------------
# Sufficient statistics (batched over any leading axes)
# ---------------------------------------------------------------------------


def exposure_stats(times, sources, b: BaselineSpec) -> tuple[np.ndarray, np.ndarray]:
    """Counts and exposures for datasets stacked on leading axes.

    Parameters
    ----------
    times, sources : array_like, shape (..., r, s)
    b : BaselineSpec

    Returns
    -------
    m : ndarray, shape (..., n, s), int
    D : ndarray, shape (..., n, s)
        ``D[j-1, k-1] = sum_i delta_{j,k,i} * I_{j,k-1,i}``.
    """
    times = np.asarray(times, dtype=float)
    sources = np.asarray(sources)
    H = b.cumhaz_matrix(times)  # (..., r, s, n)
    inc = np.diff(H, axis=-2, prepend=0.0)
    onehot = sources[..., None] == np.arange(1, b.n + 1)
    failed_before = np.cumsum(onehot, axis=-2) - onehot
    alive = ~failed_before.astype(bool)
    D = np.sum(np.where(alive, inc, 0.0), axis=-3)
    m = np.sum(onehot, axis=-3)
    return np.swapaxes(m, -1, -2), np.swapaxes(D, -1, -2)


def ratio_estimates(m, D, *, allow_degenerate: bool = False) -> np.ndarray:
    """``m / D`` where ``m > 0``, NaN elsewhere."""
    m = np.asarray(m)
    D = np.asarray(D, dtype=float)
    pos = m > 0
    degenerate = pos & ~(D > 0)
    if np.any(degenerate):
        if not allow_degenerate:
            raise EstimationError("positive failure count with zero exposure")
        pos = pos & ~degenerate
    out = np.full(D.shape, np.nan)
    np.divide(m, D, out=out, where=pos)
    return out


def order_restrict(alpha_hat, m) -> np.ndarray:
    """Order-restricted estimates from unrestricted ones, for any leading axes.

    Rows (components) with a zero count or a missing estimate come back all NaN.
    Per row: reverse the levels, take reciprocals, fit a non-decreasing
    isotonic regression weighted by the counts, reverse back and invert.
    """
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    m = np.asarray(m)
    flat_a = alpha_hat.reshape(-1, alpha_hat.shape[-1])
    flat_m = m.reshape(-1, m.shape[-1])
    out = np.full(flat_a.shape, np.nan)
    ok = np.all(flat_m > 0, axis=1) & np.all(np.isfinite(flat_a), axis=1)
    for i in np.flatnonzero(ok):
        row = flat_a[i]
        if np.all(np.diff(row) >= 0):
            out[i] = row  # already ordered; skip the reciprocal round trip
            continue
        fitted = isotonic_nondecreasing(1.0 / row[::-1], flat_m[i, ::-1])[::-1]
        out[i] = 1.0 / fitted
        # unpooled levels keep their exact unrestricted value
        for blk in pooled_blocks(fitted):
            if blk.stop - blk.start == 1:
                out[i, blk] = row[blk]
    return out.reshape(alpha_hat.shape)


def pooled_estimates(m, D) -> tuple[np.ndarray, np.ndarray]:
    """Unrestricted and order-restricted pooled per-level estimates.

    Works on ``(..., n, s)`` inputs and returns ``(..., s)`` arrays.
    """
    m = np.asarray(m)
    D = np.asarray(D, dtype=float)
    mk = m.sum(axis=-2)
    Dk = D.sum(axis=-2)
    unres = ratio_estimates(mk, Dk)
    return unres, order_restrict(unres, mk)


# ---------------------------------------------------------------------------
# Dataset-level estimators
# ---------------------------------------------------------------------------


def failure_counts(d: Dataset) -> CountTable:
    onehot = d.sources[..., None] == np.arange(1, d.n + 1)  # (r, s, n)
    m = onehot.sum(axis=0).T.astype(np.int64)
    cum = np.cumsum(onehot, axis=1)
    alive = np.concatenate([np.ones((d.r, 1, d.n), dtype=np.int64), 1 - cum], axis=1)
    seq: Counter = Counter()
    for row in d.sources.tolist():
        for k, c in enumerate(row):
            seq[(c, tuple(row[:k]))] += 1
    counts = CountTable(m=m, alive=alive, sequence=dict(seq))
    assert np.all(m.sum(axis=0) == d.r), "each level must record one failure per trial"
    return counts


def _check_baseline(d: Dataset, b: BaselineSpec) -> None:
    if b.n != d.n:
        raise ValueError(f"baseline spec has {b.n} components, dataset n={d.n}")


def _fit(d: Dataset, b: BaselineSpec, method: str, *, allow_degenerate=False, targets="alpha", mu=None):
    _check_baseline(d, b)
    counts = failure_counts(d)
    m, D = exposure_stats(d.times, d.sources, b)
    unres = ParamTable(ratio_estimates(m, D, allow_degenerate=allow_degenerate))
    if method in ("order-restricted", "location-scale"):
        params = ParamTable(order_restrict(unres.alpha, m))
    else:
        params = unres
    return EstimateResult(method, params, unres, counts, D, mu=mu, targets=targets)


def mle_unrestricted(d: Dataset, b: BaselineSpec) -> EstimateResult:
    """Closed-form unrestricted MLEs under history independence."""
    return _fit(d, b, "unrestricted")


def mle_order_restricted(d: Dataset, b: BaselineSpec) -> EstimateResult:
    """MLEs under ``alpha[j, 1] <= ... <= alpha[j, s]`` for every component.

    A component gets estimates only if all of its level counts are positive.
    """
    return _fit(d, b, "order-restricted")


def mle_unrestricted_sequence(d: Dataset, b: BaselineSpec) -> EstimateResult:
    """History-dependent unrestricted MLEs, one per observed ``(j, prefix)``."""
    _check_baseline(d, b)
    counts = failure_counts(d)
    H = b.cumhaz_matrix(d.times)
    inc = np.diff(H, axis=-2, prepend=0.0)  # (r, s, n)
    exposure: defaultdict = defaultdict(float)
    for i, row in enumerate(d.sources.tolist()):
        for k in range(d.s):
            prefix = tuple(row[:k])
            for j in range(1, d.n + 1):
                if j not in prefix:
                    exposure[(j, prefix)] += inc[i, k, j - 1]
    seq = {}
    for key, cnt in counts.sequence.items():
        den = exposure[key]
        if not den > 0:
            raise EstimationError(f"positive count with zero exposure for {key}")
        seq[key] = float(cnt / den)
    params = ParamTable(np.full((d.n, d.s), np.nan), sequence=seq)
    _, D = exposure_stats(d.times, d.sources, b)
    return EstimateResult("unrestricted-sequence", params, params, counts, D)


def mle_pooled_sos(d: Dataset, b: BaselineSpec) -> PooledEstimate:
    """Per-level estimates under ``alpha[j, k] = alpha[k]`` for all components."""
    _check_baseline(d, b)
    m, D = exposure_stats(d.times, d.sources, b)
    unres, res = pooled_estimates(m, D)
    return PooledEstimate(unres, res)


def mle_scale_family(d: Dataset, transform: Transform) -> EstimateResult:
    """Unrestricted MLEs of ``rate * alpha`` for a scale family with unknown rate."""
    b = BaselineSpec.identical(d.n, scale_family(transform))
    res = _fit(d, b, "scale-family", targets="rate*alpha")
    return res


def fit_location(d: Dataset, transform: Transform) -> float:
    """MLE of the location: the smallest transformed first-failure time."""
    return float(np.min(transform(d.times[:, 0])))


def mle_location_scale(d: Dataset, transform: Transform) -> EstimateResult:
    """Location MLE and order-restricted MLEs of ``rate * alpha``.

    Exposures start at ``x_0 = g^{-1}(mu_hat)``.  The trial attaining the
    minimum contributes zero level-1 exposure; an entry whose exposure is
    zero overall (e.g. a single trial) has no MLE and is left missing.
    """
    mu = fit_location(d, transform)
    base: Baseline = location_scale(transform, mu)
    b = BaselineSpec.identical(d.n, base)
    return _fit(
        d, b, "location-scale", allow_degenerate=True, targets="rate*alpha",
        mu=np.full(d.n, mu),
    )
