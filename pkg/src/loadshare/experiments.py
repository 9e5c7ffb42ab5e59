"""Monte Carlo studies: estimator summaries, density curves, proportionality
sweeps, existence proportions and LRT power.

Each replicate draws from its own substream (see :mod:`loadshare.simulator`),
so every result is a deterministic function of ``(scenario, seed, reps)``
whatever the chunking or number of worker processes.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import exposure_stats, order_restrict, ratio_estimates
from .inference import (
    euclidean_distance_to_null,
    null_statistics,
    simulate_null_quantiles,
)
from .model import BaselineSpec
from .simulator import ScenarioSpec, simulate_replicates, substream

ESTIMATORS = ("unrestricted", "restricted")
CHUNK = 2000


def _chunks(total: int, size: int = CHUNK):
    return [(lo, min(lo + size, total)) for lo in range(0, total, size)]


def _estimate_chunk(args):
    spec, r, lo, hi, key = args
    times, sources = simulate_replicates(spec, r, range(lo, hi), key)
    m, D = exposure_stats(times, sources, spec.baseline)
    unres = ratio_estimates(m, D)
    return unres, order_restrict(unres, m)


def _map(func, tasks, workers: int):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(func, tasks))
    return [func(t) for t in tasks]


def simulate_estimates(spec: ScenarioSpec, r: int, reps: int, *, key=(), workers: int = 1,
                       chunk: int = CHUNK):
    """Unrestricted and order-restricted estimates for ``reps`` replicates, each ``(reps, n, s)``."""
    if reps < 1:
        raise ValueError("reps must be positive")
    tasks = [(spec, r, lo, hi, tuple(key)) for lo, hi in _chunks(reps, chunk)]
    parts = _map(_estimate_chunk, tasks, workers)
    unres = np.concatenate([p[0] for p in parts])
    restr = np.concatenate([p[1] for p in parts])
    return unres, restr


# ---------------------------------------------------------------------------
# Summary tables
# ---------------------------------------------------------------------------


def _mean_sd(x: np.ndarray) -> tuple[float, float]:
    if x.size == 0:
        return math.nan, math.nan
    vals = x.tolist()
    mean = math.fsum(vals) / len(vals)
    if len(vals) < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
    return mean, math.sqrt(var)


@dataclass
class SummaryTable:
    """Mean, SD and proportion existing per (estimator, component, level).

    Means and SDs are taken over the replicates in which the estimate exists.
    """

    rows: list[dict]
    r: int
    reps: int
    scenario: dict = field(default_factory=dict)
    samples: dict[str, np.ndarray] | None = None

    FIELDS = ("estimator", "component", "level", "truth", "mean", "sd", "prop_exists", "n_exists")

    def get(self, estimator: str, component: int, level: int) -> dict:
        for row in self.rows:
            if (row["estimator"], row["component"], row["level"]) == (estimator, component, level):
                return row
        raise KeyError((estimator, component, level))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.FIELDS, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: ("" if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()})
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"r": self.r, "reps": self.reps, "scenario": self.scenario, "rows": [
            {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()}
            for row in self.rows
        ]}


def summarize(estimates: dict[str, np.ndarray], truth: np.ndarray | None = None) -> list[dict]:
    rows = []
    for name, arr in estimates.items():
        reps, n, s = arr.shape
        for j in range(n):
            for k in range(s):
                x = arr[:, j, k]
                ok = x[~np.isnan(x)]
                mean, sd = _mean_sd(ok)
                rows.append({
                    "estimator": name, "component": j + 1, "level": k + 1,
                    "truth": math.nan if truth is None else float(truth[j, k]),
                    "mean": mean, "sd": sd,
                    "prop_exists": ok.size / reps, "n_exists": int(ok.size),
                })
    return rows


def mc_estimate_summary(spec: ScenarioSpec, r: int, reps: int, *, key=(), workers: int = 1,
                        keep_samples: bool = False) -> SummaryTable:
    """Simulate ``reps`` datasets of size ``r`` and summarise both estimators."""
    unres, restr = simulate_estimates(spec, r, reps, key=key, workers=workers)
    est = {"unrestricted": unres, "restricted": restr}
    scenario = {"n": spec.n, "s": spec.s, "seed": int(spec.seed),
                "alpha": None if spec.alpha is None else spec.alpha.tolist(), **spec.descriptor}
    return SummaryTable(summarize(est, spec.alpha), r, reps, scenario,
                        est if keep_samples else None)


# ---------------------------------------------------------------------------
# Kernel density curves
# ---------------------------------------------------------------------------


@dataclass
class CurveData:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float
    n_samples: int

    def to_csv(self) -> str:
        lines = ["x,density"] + [f"{x!r},{y!r}" for x, y in zip(self.grid.tolist(), self.values.tolist())]
        return "\n".join(lines) + "\n"


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    return 1.06 * float(np.std(x, ddof=1)) * x.size ** (-0.2)


def kde_curve(samples, grid=None, *, bandwidth: float | None = None, num: int = 512) -> CurveData:
    """Gaussian kernel density estimate.

    Default bandwidth ``1.06 * sd * m**(-1/5)``; default grid has ``num``
    points from ``min - 3h`` to ``max + 3h``.
    """
    x = np.asarray(samples, dtype=float)
    x = x[~np.isnan(x)]
    if x.size < 2 or not np.ptp(x) > 0:
        raise ValueError("kernel density needs at least two distinct samples")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    if grid is None:
        grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, num)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    values = np.empty_like(grid)
    norm = 1.0 / (x.size * h * math.sqrt(2 * math.pi))
    step = max(1, 2_000_000 // x.size)
    for lo in range(0, grid.size, step):
        z = (grid[lo:lo + step, None] - x[None, :]) / h
        values[lo:lo + step] = norm * np.exp(-0.5 * z * z).sum(axis=1)
    return CurveData(grid, values, h, int(x.size))


# ---------------------------------------------------------------------------
# Proportionality sweeps and existence
# ---------------------------------------------------------------------------


def relative_bias_sum(means, truth) -> float:
    means = np.asarray(means, dtype=float)
    truth = np.asarray(truth, dtype=float)
    return float(np.sum(np.abs(means - truth) / truth))


def proportionality_sweep(
    n: int,
    s: int,
    r: int,
    reps: int,
    *,
    p_values=None,
    p_grid=None,
    baseline: BaselineSpec | None = None,
    seed: int = 0,
    component: int = 1,
    estimator: str = "restricted",
    workers: int = 1,
) -> list[dict]:
    """Summed relative bias of one component's estimates across a factor grid.

    Give ``p_values`` (same step at every level) or ``p_grid`` (pairs
    ``(p1, p2)``).  Every component follows the same factors.  Rows carry
    the per-level means and ``log_sum_rel_bias`` for heatmaps.
    """
    if (p_values is None) == (p_grid is None):
        raise ValueError("give exactly one of p_values and p_grid")
    points = [{"p": float(p)} for p in p_values] if p_values is not None else [
        {"p1": float(a), "p2": float(b)} for a, b in p_grid
    ]
    rows = []
    for gi, factors in enumerate(points):
        spec = ScenarioSpec.proportional(n, s, baseline, seed=seed, **factors)
        unres, restr = simulate_estimates(spec, r, reps, key=(gi,), workers=workers)
        arr = restr if estimator == "restricted" else unres
        comp = arr[:, component - 1, :]
        ok = ~np.isnan(comp).any(axis=1)
        means = [_mean_sd(comp[ok, k])[0] for k in range(s)]
        truth = spec.alpha[component - 1]
        srb = relative_bias_sum(means, truth) if ok.any() else math.nan
        rows.append({
            **factors,
            "sum_rel_bias": srb,
            "log_sum_rel_bias": math.log(srb) if srb > 0 else math.nan,
            "prop_exists": float(ok.mean()),
            **{f"mean_{k + 1}": means[k] for k in range(s)},
        })
    return rows


def existence_proportion(m, mode: str = "per-entry") -> np.ndarray:
    """Per-replicate existence of order-restricted estimates from counts ``(..., n, s)``.

    ``per-entry`` is the fraction of the ``n * s`` entries that exist;
    ``all`` is 1 only if every entry exists.
    """
    comp = np.all(np.asarray(m) > 0, axis=-1)
    if mode == "per-entry":
        return comp.mean(axis=-1)
    if mode == "all":
        return comp.all(axis=-1).astype(float)
    raise ValueError(f"unknown existence mode {mode!r}")


def _count_chunk(args):
    spec, r, lo, hi, key = args
    times, sources = simulate_replicates(spec, r, range(lo, hi), key)
    onehot = sources[..., None] == np.arange(1, spec.n + 1)
    return np.swapaxes(onehot.sum(axis=-3), -1, -2)


def existence_study(
    ptilde_values,
    r_values,
    reps: int,
    *,
    n: int = 4,
    s: int = 3,
    p: float = 1.5,
    baseline: BaselineSpec | None = None,
    seed: int = 0,
    mode: str = "per-entry",
    workers: int = 1,
) -> list[dict]:
    """Proportion of existing order-restricted estimates per ``(ptilde, r)``."""
    rows = []
    for pi, pt in enumerate(ptilde_values):
        spec = ScenarioSpec.proportional(n, s, baseline, seed=seed, p=p, ptilde=pt)
        for r in r_values:
            tasks = [(spec, int(r), lo, hi, (pi, int(r))) for lo, hi in _chunks(reps)]
            m = np.concatenate(_map(_count_chunk, tasks, workers))
            prop = existence_proportion(m, mode)
            rows.append({"ptilde": float(pt), "r": int(r), "proportion": math.fsum(prop.tolist()) / reps,
                         "reps": reps, "mode": mode})
    return rows


# ---------------------------------------------------------------------------
# LRT power
# ---------------------------------------------------------------------------


def power_design_alphas(design: str, combos: int, seed: int, n: int = 3) -> list[np.ndarray]:
    """Random true parameter grids (``n`` components, two levels).

    ``level1``: level-1 values uniform on [0.1, 2], level 2 at their maximum.
    ``level2``: level 1 fixed at 0.5, level-2 values uniform on [0.5, 4].
    ``null``: every component equal, ``(0.5, 1.0)``.
    """
    rng = substream(seed, 0xD0)
    out = []
    for _ in range(combos):
        if design == "level1":
            a1 = rng.uniform(0.1, 2.0, n)
            a = np.column_stack([a1, np.full(n, a1.max())])
        elif design == "level2":
            a = np.column_stack([np.full(n, 0.5), rng.uniform(0.5, 4.0, n)])
        elif design == "null":
            a = np.tile([0.5, 1.0], (n, 1))
        else:
            raise ValueError(f"unknown power design {design!r}")
        out.append(a)
    return out


def running_mean(x, y, window: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Moving average of ``y`` over points sorted by ``x`` (valid windows only)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = ~np.isnan(y)
    x, y = x[keep], y[keep]
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    if x.size < window:
        return x.copy(), y.copy()
    kern = np.ones(window) / window
    return np.convolve(x, kern, "valid"), np.convolve(y, kern, "valid")


@dataclass
class PowerStudy:
    rows: list[dict]
    curves: dict[int, tuple[np.ndarray, np.ndarray]]
    level: float
    window: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "combo", "distance", "power", "n_valid", "critical_value"])
        for row in self.rows:
            w.writerow([row["r"], row["combo"], row["distance"], row["power"],
                        row["n_valid"], row["critical_value"]])
        return buf.getvalue()


def power_study(
    design: str = "level1",
    r_values=(10, 25, 50),
    combos: int = 100,
    reps: int = 1000,
    *,
    n_null: int = 2000,
    level: float = 0.05,
    seed: int = 0,
    window: int = 5,
    alphas=None,
    baseline: BaselineSpec | None = None,
) -> PowerStudy:
    """Empirical LRT power against Euclidean distance to the null.

    For each true grid the null quantile is simulated at its projection onto
    the null (the per-level component mean).  Power is the rejection rate
    among replicates where the test is computable.
    """
    if alphas is None:
        alphas = power_design_alphas(design, combos, seed)
    alphas = [np.asarray(a, dtype=float) for a in alphas]
    rows = []
    curves = {}
    for r in r_values:
        r = int(r)
        dist, pw = [], []
        for ci, a in enumerate(alphas):
            n, s = a.shape
            b = baseline or BaselineSpec.identical(n)
            null = ScenarioSpec(n, s, b, alpha=np.tile(a.mean(axis=0), (n, 1)), seed=seed)
            q = simulate_null_quantiles(null, r, n_null, (1 - level,), key=(1, r, ci))
            crit = q.critical_value(1 - level)
            alt = ScenarioSpec(n, s, b, alpha=a, seed=seed)
            T = np.concatenate([null_statistics(alt, r, range(lo, hi), (2, r, ci))
                                for lo, hi in _chunks(reps)])
            ok = T[~np.isnan(T)]
            power = float(np.mean(ok > crit)) if ok.size else math.nan
            d = euclidean_distance_to_null(a)
            rows.append({"r": r, "combo": ci, "distance": d, "power": power,
                         "n_valid": int(ok.size), "critical_value": crit, "alpha": a.tolist()})
            dist.append(d)
            pw.append(power)
        curves[r] = running_mean(dist, pw, window)
    return PowerStudy(rows, curves, level, window)


def three_of_four_scenario(seed: int = 0) -> ScenarioSpec:
    """3-out-of-4:F scenario for comparing the two estimators.

    Component 1 has ``(2, 2.5, 2.75)``; components 2-4 share ``(1.5, 1.75, 2.0)``.
    """
    alpha = np.array([[2.0, 2.5, 2.75]] + [[1.5, 1.75, 2.0]] * 3)
    return ScenarioSpec(4, 3, BaselineSpec.identical(4), alpha=alpha, seed=seed,
                        descriptor={"scenario": "3-of-4-F"})
