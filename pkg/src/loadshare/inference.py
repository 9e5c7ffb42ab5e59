"""Likelihood ratio test of the pooled model (``alpha[j, k] = alpha[k]``) against
the full heterogeneous model, with both fits order-restricted and null
quantiles obtained by simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import exposure_stats, order_restrict, pooled_estimates, ratio_estimates
from .model import BaselineSpec, Dataset, ParamTable, log_likelihood
from .simulator import ScenarioSpec, simulate_replicates

SCHEMA_VERSION = 1
DEFAULT_PROBS = (0.5, 0.9, 0.95, 0.99)
# fraction of dropped null replicates above which a quantile table is flagged
UNRELIABLE_DROP_RATE = 0.2
# negative statistics down to this size are treated as roundoff
CLAMP_TOL = 1e-9


class TestNotComputable(ValueError):
    """Order-restricted estimates do not exist for every component."""

    __test__ = False


class MissingQuantileError(KeyError):
    pass


@dataclass
class QuantileTable:
    probs: np.ndarray
    values: np.ndarray
    n_sim: int
    n_used: int
    dropped: int
    meta: dict = field(default_factory=dict)

    @property
    def unreliable(self) -> bool:
        return self.dropped > UNRELIABLE_DROP_RATE * self.n_sim

    def critical_value(self, prob: float) -> float:
        hit = np.flatnonzero(np.isclose(self.probs, prob, rtol=0, atol=1e-9))
        if hit.size == 0:
            raise MissingQuantileError(f"quantile table has no entry for probability {prob}")
        return float(self.values[hit[0]])

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "probs": [float(p) for p in self.probs],
            "values": [float(v) for v in self.values],
            "n_sim": self.n_sim,
            "n_used": self.n_used,
            "dropped": self.dropped,
            "unreliable": self.unreliable,
            **({"meta": self.meta} if self.meta else {}),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileTable":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported quantile table schema {d.get('schema_version')!r}")
        return cls(
            probs=np.asarray(d["probs"], dtype=float),
            values=np.asarray(d["values"], dtype=float),
            n_sim=int(d["n_sim"]),
            n_used=int(d["n_used"]),
            dropped=int(d["dropped"]),
            meta=d.get("meta", {}),
        )


@dataclass
class LrtResult:
    T: float
    level: float
    critical_value: float
    reject: bool
    quantiles: QuantileTable

    @property
    def n_sim(self) -> int:
        return self.quantiles.n_sim

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "T": self.T,
            "level": self.level,
            "critical_value": self.critical_value,
            "decision": "reject" if self.reject else "retain",
            "quantiles": self.quantiles.to_dict(),
        }


def _fitted_tables(d: Dataset, b: BaselineSpec):
    m, D = exposure_stats(d.times, d.sources, b)
    full = order_restrict(ratio_estimates(m, D), m)
    if np.isnan(full).any():
        missing = [j + 1 for j in range(d.n) if np.isnan(full[j]).any()]
        raise TestNotComputable(
            f"order-restricted estimates missing for components {missing}; "
            "every component must fail at every level at least once"
        )
    _, pooled = pooled_estimates(m, D)
    return ParamTable(full), ParamTable(np.tile(pooled, (d.n, 1)))


def lrt_statistic(d: Dataset, b: BaselineSpec) -> float:
    """``T = -2 (l(pooled OR fit) - l(component-wise OR fit))``, clamped at 0."""
    full, pooled = _fitted_tables(d, b)
    T = -2.0 * (log_likelihood(d, pooled, b) - log_likelihood(d, full, b))
    return max(T, 0.0)


def lrt_statistics(m, D) -> np.ndarray:
    """Batched ``T`` from counts and exposures of shape ``(..., n, s)``.

    Uses only the alpha-dependent part of the log-likelihood,
    ``sum m log(alpha) - alpha D``; NaN where the test is not computable.
    """
    m = np.asarray(m)
    D = np.asarray(D, dtype=float)
    full = order_restrict(ratio_estimates(m, D), m)
    _, pooled = pooled_estimates(m, D)
    pooled = np.broadcast_to(pooled[..., None, :], full.shape)

    def ll(a):
        with np.errstate(invalid="ignore", divide="ignore"):
            terms = np.where(m > 0, m * np.log(a), 0.0) - a * D
        return terms.sum(axis=(-2, -1))

    T = -2.0 * (ll(pooled) - ll(full))
    bad = np.isnan(full).any(axis=(-2, -1))
    T = np.where(bad, np.nan, np.maximum(T, 0.0))
    return T


def _check_null_spec(spec: ScenarioSpec) -> None:
    if spec.history_dependent:
        raise ValueError("null scenarios use a level-only alpha grid")
    if not np.allclose(spec.alpha, spec.alpha[0], rtol=0, atol=0):
        raise ValueError("null scenario needs identical alpha across components at each level")


def null_statistics(spec: ScenarioSpec, r: int, indices, key=()) -> np.ndarray:
    times, sources = simulate_replicates(spec, r, indices, key)
    m, D = exposure_stats(times, sources, spec.baseline)
    return lrt_statistics(m, D)


def quantile_table(T, probs, n_sim: int, meta=None) -> QuantileTable:
    T = np.asarray(T, dtype=float)
    ok = T[~np.isnan(T)]
    probs = np.asarray(sorted(probs), dtype=float)
    if ok.size == 0:
        raise TestNotComputable("no null replicate produced a computable statistic")
    values = np.quantile(ok, probs)
    values = np.maximum.accumulate(values)
    return QuantileTable(probs, values, n_sim, int(ok.size), int(n_sim - ok.size), dict(meta or {}))


def simulate_null_quantiles(
    spec: ScenarioSpec,
    r: int,
    n_sim: int = 100_000,
    probs=DEFAULT_PROBS,
    *,
    key: tuple[int, ...] = (),
    chunk: int = 5000,
    min_sims: int = 1000,
) -> QuantileTable:
    """Empirical quantiles of ``T`` over ``n_sim`` null datasets of size ``r``.

    Replicates without order-restricted estimates are dropped and counted;
    the table is flagged unreliable above a 20% drop rate.
    """
    _check_null_spec(spec)
    if n_sim < min_sims:
        raise ValueError(f"n_sim={n_sim} below the minimum of {min_sims}")
    if any(not 0 < p < 1 for p in probs):
        raise ValueError("probabilities must lie in (0, 1)")
    parts = [
        null_statistics(spec, r, range(lo, min(lo + chunk, n_sim)), key)
        for lo in range(0, n_sim, chunk)
    ]
    meta = {"n": spec.n, "s": spec.s, "r": int(r), "seed": int(spec.seed),
            "alpha": [float(a) for a in spec.alpha[0]]}
    return quantile_table(np.concatenate(parts), probs, n_sim, meta)


def bootstrap_null_spec(d: Dataset, b: BaselineSpec, seed: int = 0) -> ScenarioSpec:
    """Null scenario at the pooled order-restricted fit of ``d``."""
    m, D = exposure_stats(d.times, d.sources, b)
    _, pooled = pooled_estimates(m, D)
    return ScenarioSpec(d.n, d.s, b, alpha=np.tile(pooled, (d.n, 1)), seed=seed,
                        descriptor={"null": "bootstrap"})


def lrt_test(d: Dataset, b: BaselineSpec, level: float, q: QuantileTable) -> LrtResult:
    """Reject the pooled model iff ``T`` exceeds the ``1 - level`` quantile."""
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    crit = q.critical_value(1.0 - level)
    T = lrt_statistic(d, b)
    return LrtResult(T=T, level=level, critical_value=crit, reject=bool(T > crit), quantiles=q)


def lrt(
    d: Dataset,
    b: BaselineSpec,
    level: float = 0.05,
    n_sim: int = 100_000,
    seed: int = 0,
    null_alpha=None,
) -> LrtResult:
    """Full test: simulate null quantiles, then decide.

    By default the null is a parametric bootstrap at the pooled fit of ``d``;
    ``null_alpha`` (one value per level) overrides it for sensitivity checks.
    """
    if null_alpha is None:
        spec = bootstrap_null_spec(d, b, seed)
    else:
        a = np.asarray(null_alpha, dtype=float)
        spec = ScenarioSpec(d.n, d.s, b, alpha=np.tile(a, (d.n, 1)), seed=seed,
                            descriptor={"null": "user"})
    probs = sorted({*DEFAULT_PROBS, round(1.0 - level, 12)})
    q = simulate_null_quantiles(spec, d.r, n_sim, probs)
    if q.unreliable:
        q.meta["warning"] = "more than 20% of null replicates lacked estimates"
    return lrt_test(d, b, level, q)


def euclidean_distance_to_null(alpha) -> float:
    """Distance from an ``(n, s)`` grid to the nearest grid with equal rows."""
    a = np.asarray(alpha, dtype=float)
    return math.sqrt(float(np.sum((a - a.mean(axis=0)) ** 2)))
