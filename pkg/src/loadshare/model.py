"""Conditional proportional hazard rate (CPHR) model for load-sharing systems.

Component ``j`` at level ``k`` has survival function ``Fbar_j*(t) ** alpha[j, k]``
where ``Fbar_j*`` is the component's baseline survival.  Every baseline used here
has a cumulative hazard of the form ``rate * (g(t) - location)`` for a monotone
transform ``g``:

* exponential: ``g(t) = t``, ``location = 0``
* scale family: any ``g`` with ``g(x0) = 0`` at the lower support point ``x0``
* location-scale family: ``location = mu`` and support ``t >= g^{-1}(mu)``

All likelihood work is done with log-survivals; increments are differences of
cumulative hazards, never logs of survival ratios.

Component labels are 1-based in every public interface.  Arrays indexed by
component use position ``j - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class DomainError(ValueError):
    """A time lies outside the support of a baseline distribution."""


class MissingParameterError(ValueError):
    """A likelihood evaluation needs a parameter that is MISSING."""


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Identity:
    name = "identity"

    def __call__(self, t):
        return np.asarray(t, dtype=float) * 1.0

    def inverse(self, y):
        return np.asarray(y, dtype=float) * 1.0

    def derivative(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    @property
    def domain_min(self) -> float:
        return -math.inf

    def to_dict(self) -> dict:
        return {"transform": self.name}


@dataclass(frozen=True)
class Power:
    """``g(t) = t**a`` on ``t >= 0`` (Weibull baselines)."""

    a: float
    name = "power"

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"power exponent must be positive, got {self.a}")

    def __call__(self, t):
        return np.power(np.asarray(t, dtype=float), self.a)

    def inverse(self, y):
        return np.power(np.asarray(y, dtype=float), 1.0 / self.a)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return self.a * np.power(t, self.a - 1.0)

    @property
    def domain_min(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        return {"transform": self.name, "a": self.a}


@dataclass(frozen=True)
class Log:
    """``g(t) = ln t`` on ``t > 0`` (Pareto baselines when used as a scale family)."""

    name = "log"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(t)

    def inverse(self, y):
        return np.exp(np.asarray(y, dtype=float))

    def derivative(self, t):
        return 1.0 / np.asarray(t, dtype=float)

    @property
    def domain_min(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        return {"transform": self.name}


Transform = Identity | Power | Log


def transform_from_dict(d: dict) -> Transform:
    tag = d.get("transform", "identity").lower()
    if tag == "identity":
        return Identity()
    if tag == "power":
        return Power(float(d["a"]))
    if tag == "log":
        return Log()
    raise ValueError(f"unknown transform {tag!r}")


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Baseline:
    """Baseline lifetime law of one component.

    ``rate_known=False`` marks a scale or location-scale family whose rate is
    not identifiable; the rate is then pinned to 1 and any fitted ``alpha``
    should be read as ``rate * alpha``.
    """

    family: str = "exponential"
    transform: Transform = field(default_factory=Identity)
    rate: float = 1.0
    location: float = 0.0
    rate_known: bool = True

    def __post_init__(self):
        if self.family not in ("exponential", "scale", "location-scale"):
            raise ValueError(f"unknown baseline family {self.family!r}")
        if not self.rate > 0:
            raise ValueError(f"baseline rate must be positive, got {self.rate}")
        if self.family != "location-scale" and self.location != 0.0:
            raise ValueError("only location-scale baselines carry a location")

    @property
    def lower(self) -> float:
        """Left end of the support, ``g^{-1}(location)``; this is also ``x_0``."""
        return float(self.transform.inverse(self.location))

    def check_support(self, t) -> None:
        t = np.asarray(t, dtype=float)
        # compared in transformed space so that t = g^{-1}(location) is never lost to rounding
        with np.errstate(invalid="ignore"):
            bad = ~(t >= self.transform.domain_min) | ~(self.transform(t) >= self.location)
        if np.any(bad):
            first = t[bad].flat[0] if t.ndim else float(t)
            raise DomainError(
                f"time {first!r} outside baseline support [{self.lower}, inf)"
            )

    def cumhaz(self, t):
        """Cumulative hazard ``rate * (g(t) - location)``; zero at ``x_0``."""
        self.check_support(t)
        return self.rate * (self.transform(t) - self.location)

    def log_survival(self, t):
        return -self.cumhaz(t)

    def hazard(self, t):
        self.check_support(t)
        return self.rate * self.transform.derivative(t)

    def inverse_cumhaz(self, h):
        return self.transform.inverse(self.location + np.asarray(h, dtype=float) / self.rate)

    def to_dict(self) -> dict:
        d = {"family": self.family, **self.transform.to_dict()}
        if self.rate_known:
            d["rate"] = self.rate
        if self.family == "location-scale":
            d["mu"] = self.location
        return d


def exponential(rate: float = 1.0) -> Baseline:
    return Baseline("exponential", Identity(), float(rate), 0.0, True)


def scale_family(transform: Transform, rate: float | None = None) -> Baseline:
    """Scale family ``1 - exp(-rate * g(t))``; ``rate=None`` means unknown (pinned to 1)."""
    known = rate is not None
    return Baseline("scale", transform, float(rate) if known else 1.0, 0.0, known)


def location_scale(transform: Transform, mu: float) -> Baseline:
    """Location-scale family ``1 - exp(-rate * (g(t) - mu))`` with unknown rate."""
    if isinstance(transform, Power) and mu < 0:
        raise ValueError("power transform has no preimage for a negative location")
    return Baseline("location-scale", transform, 1.0, float(mu), False)


def baseline_from_dict(d: dict) -> Baseline:
    family = d.get("family", "exponential").lower()
    if family == "exponential":
        return exponential(float(d.get("rate", 1.0)))
    transform = transform_from_dict(d)
    if family == "scale":
        rate = d.get("rate")
        return scale_family(transform, None if rate is None else float(rate))
    if family == "location-scale":
        return location_scale(transform, float(d.get("mu", 0.0)))
    raise ValueError(f"unknown baseline family {family!r}")


@dataclass(frozen=True)
class BaselineSpec:
    """One baseline per component, in label order."""

    components: tuple[Baseline, ...]

    def __post_init__(self):
        if len(self.components) == 0:
            raise ValueError("baseline spec needs at least one component")
        object.__setattr__(self, "components", tuple(self.components))

    @classmethod
    def identical(cls, n: int, baseline: Baseline | None = None) -> "BaselineSpec":
        return cls((baseline or exponential(1.0),) * n)

    @property
    def n(self) -> int:
        return len(self.components)

    def __getitem__(self, j: int) -> Baseline:
        """Baseline of component ``j`` (1-based)."""
        if not 1 <= j <= self.n:
            raise IndexError(f"component {j} not in 1..{self.n}")
        return self.components[j - 1]

    def cumhaz_matrix(self, t) -> np.ndarray:
        """Cumulative hazards for every component, stacked on a new last axis."""
        return np.stack([b.cumhaz(t) for b in self.components], axis=-1)

    def lower_bounds(self) -> np.ndarray:
        return np.array([b.lower for b in self.components])

    def to_dict(self) -> dict | list:
        first = self.components[0]
        if all(b == first for b in self.components):
            return first.to_dict()
        return [b.to_dict() for b in self.components]


def baseline_spec_from_config(cfg, n: int) -> BaselineSpec:
    """Accept a single baseline dict (shared) or a list of per-component dicts.

    A shared dict may give ``rate`` as a list to vary it by component.
    """
    if cfg is None:
        return BaselineSpec.identical(n)
    if isinstance(cfg, list):
        if len(cfg) != n:
            raise ValueError(f"baseline list has {len(cfg)} entries, expected n={n}")
        return BaselineSpec(tuple(baseline_from_dict(c) for c in cfg))
    rate = cfg.get("rate")
    if isinstance(rate, list):
        if len(rate) != n:
            raise ValueError(f"rate list has {len(rate)} entries, expected n={n}")
        return BaselineSpec(tuple(baseline_from_dict({**cfg, "rate": x}) for x in rate))
    return BaselineSpec.identical(n, baseline_from_dict(cfg))


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Observation:
    """Failure record of one system: increasing times and distinct sources."""

    times: tuple[float, ...]
    sources: tuple[int, ...]

    def __post_init__(self):
        times = tuple(float(x) for x in self.times)
        sources = tuple(int(c) for c in self.sources)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "sources", sources)
        if len(times) != len(sources):
            raise ValueError("times and sources differ in length")
        if len(times) == 0:
            raise ValueError("observation needs at least one failure")
        if not times[0] > 0:
            raise ValueError(f"first failure time must be positive, got {times[0]}")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"failure times not strictly increasing: {times}")
        if len(set(sources)) != len(sources):
            raise ValueError(f"repeated failure source: {sources}")
        if min(sources) < 1:
            raise ValueError(f"component labels start at 1: {sources}")

    @property
    def s(self) -> int:
        return len(self.times)


class Dataset:
    """``r`` observations of depth ``s`` from systems of size ``n``.

    Stored as two ``(r, s)`` arrays; ``sources`` holds 1-based labels.
    """

    def __init__(self, n: int, times, sources, *, validate: bool = True):
        self.n = int(n)
        self.times = np.asarray(times, dtype=float)
        self.sources = np.asarray(sources, dtype=np.int64)
        if validate:
            self._validate()

    @classmethod
    def from_observations(cls, n: int, observations: Iterable[Observation]) -> "Dataset":
        obs = list(observations)
        if not obs:
            raise ValueError("dataset needs at least one observation")
        depths = {o.s for o in obs}
        if len(depths) != 1:
            raise ValueError(f"observations differ in depth: {sorted(depths)}")
        return cls(n, [o.times for o in obs], [o.sources for o in obs])

    def _validate(self) -> None:
        if self.times.ndim != 2 or self.times.shape != self.sources.shape:
            raise ValueError("times and sources must be matching (r, s) arrays")
        r, s = self.times.shape
        if r < 1:
            raise ValueError("dataset needs at least one observation")
        if not 1 <= s <= self.n:
            raise ValueError(f"depth s={s} must satisfy 1 <= s <= n={self.n}")
        if np.any(self.sources < 1) or np.any(self.sources > self.n):
            raise ValueError(f"component labels must lie in 1..{self.n}")
        if not np.all(self.times[:, 0] > 0):
            i = int(np.argmin(self.times[:, 0] > 0))
            raise ValueError(f"trial {i + 1}: first failure time must be positive")
        bad = np.any(np.diff(self.times, axis=1) <= 0, axis=1)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ValueError(f"trial {i + 1}: failure times not strictly increasing")
        srt = np.sort(self.sources, axis=1)
        dup = np.any(np.diff(srt, axis=1) == 0, axis=1)
        if np.any(dup):
            i = int(np.argmax(dup))
            raise ValueError(f"trial {i + 1}: component fails twice")

    @property
    def r(self) -> int:
        return self.times.shape[0]

    @property
    def s(self) -> int:
        return self.times.shape[1]

    @property
    def observations(self) -> list[Observation]:
        return [Observation(t, c) for t, c in zip(self.times.tolist(), self.sources.tolist())]

    def __len__(self) -> int:
        return self.r

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Dataset)
            and self.n == other.n
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.sources, other.sources)
        )

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, r={self.r}, s={self.s})"


@dataclass
class ParamTable:
    """``alpha[j-1, k-1]`` for component ``j`` at level ``k``; NaN marks MISSING.

    ``sequence`` optionally holds history-dependent parameters keyed by
    ``(j, prefix)`` where ``prefix`` lists the earlier failure sources in
    chronological order.
    """

    alpha: np.ndarray
    sequence: dict[tuple[int, tuple[int, ...]], float] | None = None

    def __post_init__(self):
        self.alpha = np.array(self.alpha, dtype=float)
        if self.alpha.ndim != 2:
            raise ValueError("alpha must be an (n, s) array")
        present = self.alpha[~np.isnan(self.alpha)]
        if np.any(present <= 0):
            raise ValueError("present alpha entries must be strictly positive")
        if self.sequence is not None:
            if any(not v > 0 for v in self.sequence.values()):
                raise ValueError("sequence alpha entries must be strictly positive")

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def s(self) -> int:
        return self.alpha.shape[1]

    @property
    def exists(self) -> np.ndarray:
        return ~np.isnan(self.alpha)

    def get(self, j: int, k: int, prefix: Sequence[int] = ()) -> float:
        """Parameter for component ``j`` at level ``k`` after failures ``prefix``."""
        if self.sequence is not None:
            key = (int(j), tuple(int(c) for c in prefix))
            if key not in self.sequence:
                raise MissingParameterError(f"alpha_{{{j}|{key[1]}}} is MISSING")
            return self.sequence[key]
        a = self.alpha[j - 1, k - 1]
        if np.isnan(a):
            raise MissingParameterError(f"alpha_{{{j},{k}}} is MISSING")
        return float(a)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def log_survival(b: BaselineSpec, j: int, t: float) -> float:
    """``ln Fbar_j*(t)``."""
    return float(b[j].log_survival(t))


def delta(b: BaselineSpec, j: int, t_prev: float, t_curr: float) -> float:
    """Cumulative-hazard increment of component ``j`` over ``(t_prev, t_curr]``."""
    if t_curr < t_prev:
        raise ValueError(f"t_prev={t_prev} exceeds t_curr={t_curr}")
    base = b[j]
    return float(base.cumhaz(t_curr) - base.cumhaz(t_prev))


def cphr_hazard(alpha: float, b: BaselineSpec, j: int, t: float) -> float:
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return float(alpha * b[j].hazard(t))


def _check_obs(obs: Observation, p: ParamTable, b: BaselineSpec) -> None:
    if max(obs.sources) > b.n:
        raise ValueError(f"source label exceeds n={b.n}")
    if p.sequence is None and (p.n != b.n or p.s < obs.s):
        raise ValueError(f"parameter table {p.alpha.shape} does not cover n={b.n}, s={obs.s}")


def esos_log_density(obs: Observation, p: ParamTable, b: BaselineSpec) -> float:
    """Log joint density of ``(x_1, c_1, ..., x_s, c_s)`` under CPHR."""
    _check_obs(obs, p, b)
    n = b.n
    # x_0 sits at each component's own lower support point
    prev = np.zeros(n)
    alive = set(range(1, n + 1))
    total = 0.0
    for k, (x, c) in enumerate(zip(obs.times, obs.sources), start=1):
        prefix = obs.sources[: k - 1]
        curr = np.array([b[j].cumhaz(x) for j in range(1, n + 1)])
        a_c = p.get(c, k, prefix)
        total += math.log(a_c) + math.log(b[c].hazard(x))
        for j in alive:
            total -= p.get(j, k, prefix) * (curr[j - 1] - prev[j - 1])
        alive.discard(c)
        prev = curr
    return total


def log_likelihood(d: Dataset, p: ParamTable, b: BaselineSpec) -> float:
    """Sum of :func:`esos_log_density` over the observations of ``d``."""
    if b.n != d.n:
        raise ValueError(f"baseline spec has {b.n} components, dataset n={d.n}")
    return math.fsum(esos_log_density(o, p, b) for o in d.observations)
