"""Simulation of load-sharing systems under the CPHR model.

Systems are generated constructively: at every level each surviving component
draws a residual lifetime from its level-specific conditional law, the minimum
is the next failure and its owner the failure source.

Randomness
----------
No global RNG is used.  Every dataset is drawn from its own counter-based
Philox stream keyed by ``(seed, *key, replicate)`` (see :func:`substream`), and
within a dataset system ``i`` consumes exactly the ``i``-th block of ``s * n``
uniforms.  Results therefore do not depend on batching, execution order or the
number of worker processes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .model import BaselineSpec, Dataset, Observation

# shifts k / 2**53 from Generator.random onto the open interval (0, 1)
_HALF_ULP = 2.0**-54


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def proportional_alpha(
    n: int,
    s: int,
    *,
    p: float | None = None,
    p1: float | None = None,
    p2: float | None = None,
    ptilde: float = 1.0,
    base: float = 1.0,
) -> np.ndarray:
    """Parameter grid from proportionality factors.

    ``alpha[0, 0] = base``; level steps are ``p`` at every level, or ``p1``
    then ``p2`` (requires ``s <= 3``); component ``j`` is ``ptilde**(j-1)``
    times component 1.
    """
    if p is not None and (p1 is not None or p2 is not None):
        raise ValueError("give either p or (p1, p2), not both")
    if p1 is not None or p2 is not None:
        if s > 3:
            raise ValueError("(p1, p2) describes at most three levels")
        steps = [p1 if p1 is not None else 1.0, p2 if p2 is not None else 1.0][: s - 1]
    else:
        steps = [1.0 if p is None else p] * (s - 1)
    levels = base * np.cumprod([1.0, *steps])
    comps = ptilde ** np.arange(n)
    alpha = np.outer(comps, levels)
    if not np.all(alpha > 0):
        raise ValueError("proportionality factors must be positive")
    return alpha


@dataclass
class ScenarioSpec:
    """Everything needed to simulate a dataset except its size ``r``.

    Exactly one of ``alpha`` (an ``(n, s)`` grid) and ``sequence_alpha``
    (``(j, prefix) -> alpha`` for every reachable prefix) is given.
    """

    n: int
    s: int
    baseline: BaselineSpec | None = None
    alpha: np.ndarray | None = None
    sequence_alpha: dict[tuple[int, tuple[int, ...]], float] | None = None
    seed: int = 0
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.n >= self.s >= 1:
            raise ValueError(f"need n >= s >= 1, got n={self.n}, s={self.s}")
        if self.baseline is None:
            self.baseline = BaselineSpec.identical(self.n)
        if self.baseline.n != self.n:
            raise ValueError(f"baseline spec has {self.baseline.n} components, n={self.n}")
        if (self.alpha is None) == (self.sequence_alpha is None):
            raise ValueError("give exactly one of alpha and sequence_alpha")
        if self.alpha is not None:
            self.alpha = np.array(self.alpha, dtype=float)
            if self.alpha.shape != (self.n, self.s):
                raise ValueError(f"alpha has shape {self.alpha.shape}, expected {(self.n, self.s)}")
            if not np.all(self.alpha > 0):
                raise ValueError("alpha entries must be strictly positive")
        else:
            self._check_sequence_alpha()
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def _check_sequence_alpha(self) -> None:
        labels = range(1, self.n + 1)
        for k in range(self.s):
            for prefix in itertools.permutations(labels, k):
                for j in labels:
                    if j in prefix:
                        continue
                    a = self.sequence_alpha.get((j, prefix))
                    if a is None:
                        raise ValueError(f"sequence alpha missing for component {j} after {prefix}")
                    if not a > 0:
                        raise ValueError(f"sequence alpha for {(j, prefix)} must be positive")

    @classmethod
    def proportional(cls, n, s, baseline=None, seed=0, **factors) -> "ScenarioSpec":
        alpha = proportional_alpha(n, s, **factors)
        return cls(n, s, baseline, alpha=alpha, seed=seed, descriptor=dict(factors))

    @property
    def history_dependent(self) -> bool:
        return self.sequence_alpha is not None


def sample_conditional_failure(
    b: BaselineSpec, j: int, alpha: float, t_prev: float, u: float
) -> float:
    """Failure time ``x`` solving ``Fbar_j*(x) = Fbar_j*(t_prev) * u**(1/alpha)``."""
    if not 0 < u <= 1:
        raise ValueError(f"u must lie in (0, 1], got {u}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    base = b[j]
    return float(base.inverse_cumhaz(base.cumhaz(t_prev) - np.log(u) / alpha))


def _uniforms(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.random(shape) + _HALF_ULP


def _simulate_grid(alpha: np.ndarray, b: BaselineSpec, U: np.ndarray):
    """Vectorised construction for an ``(n, s)`` alpha grid.

    ``U`` has shape ``(..., s, n)``; returns times and 1-based sources of shape ``(..., s)``.
    """
    n, s = alpha.shape
    E = -np.log(U)
    lead = U.shape[:-2]
    alive = np.ones(lead + (n,), dtype=bool)
    Hprev = np.zeros(lead + (n,))
    times = np.empty(lead + (s,))
    sources = np.empty(lead + (s,), dtype=np.int64)
    for k in range(s):
        target = Hprev + E[..., k, :] / alpha[:, k]
        cand = np.stack(
            [b.components[j].inverse_cumhaz(target[..., j]) for j in range(n)], axis=-1
        )
        cand = np.where(alive, cand, np.inf)
        c = np.argmin(cand, axis=-1)
        x = np.take_along_axis(cand, c[..., None], axis=-1)[..., 0]
        times[..., k] = x
        sources[..., k] = c + 1
        np.put_along_axis(alive, c[..., None], False, axis=-1)
        if k + 1 < s:
            Hprev = b.cumhaz_matrix(x)
    return times, sources


def _simulate_sequence(spec: ScenarioSpec, U: np.ndarray):
    """Per-system construction with prefix-keyed parameters; ``U`` is ``(r, s, n)``."""
    r = U.shape[0]
    b = spec.baseline
    times = np.empty((r, spec.s))
    sources = np.empty((r, spec.s), dtype=np.int64)
    for i in range(r):
        t_prev = None
        prefix: tuple[int, ...] = ()
        for k in range(spec.s):
            best_x, best_j = np.inf, 0
            for j in range(1, spec.n + 1):
                if j in prefix:
                    continue
                a = spec.sequence_alpha[(j, prefix)]
                base = b[j]
                h0 = 0.0 if t_prev is None else float(base.cumhaz(t_prev))
                x = float(base.inverse_cumhaz(h0 - np.log(U[i, k, j - 1]) / a))
                if x < best_x:
                    best_x, best_j = x, j
            times[i, k] = best_x
            sources[i, k] = best_j
            prefix = prefix + (best_j,)
            t_prev = best_x
    return times, sources


def sample_dataset(spec: ScenarioSpec, r: int, rng: np.random.Generator) -> Dataset:
    """``r`` independent systems; system ``i`` uses the ``i``-th block of the stream."""
    if r < 1:
        raise ValueError("a dataset needs r >= 1 systems")
    U = _uniforms(rng, (r, spec.s, spec.n))
    if spec.history_dependent:
        times, sources = _simulate_sequence(spec, U)
    else:
        times, sources = _simulate_grid(spec.alpha, spec.baseline, U)
    return Dataset(spec.n, times, sources)


def sample_system(spec: ScenarioSpec, rng: np.random.Generator) -> Observation:
    return sample_dataset(spec, 1, rng).observations[0]


def simulate_replicates(
    spec: ScenarioSpec, r: int, indices, key: tuple[int, ...] = ()
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked datasets for replicate ``indices``; replicate ``b`` uses ``substream(seed, *key, b)``.

    Returns ``times`` and ``sources`` of shape ``(len(indices), r, s)``.
    Identical to calling :func:`sample_dataset` per replicate.
    """
    if r < 1:
        raise ValueError("a dataset needs r >= 1 systems")
    indices = list(indices)
    U = np.stack(
        [_uniforms(substream(spec.seed, *key, b), (r, spec.s, spec.n)) for b in indices]
    ) if indices else np.empty((0, r, spec.s, spec.n))
    if spec.history_dependent:
        parts = [_simulate_sequence(spec, u) for u in U]
        times = np.stack([p[0] for p in parts]) if parts else np.empty((0, r, spec.s))
        sources = np.stack([p[1] for p in parts]) if parts else np.empty((0, r, spec.s), dtype=np.int64)
        return times, sources
    return _simulate_grid(spec.alpha, spec.baseline, U)
