"""Straggler models for per-worker batch sizes and their moments.

Each iteration every worker ``i`` completes ``b_i >= 1`` gradient samples,
drawn i.i.d. across workers and iterations. The variance bounds depend on
four moments of these counts, with ``b = sum_i b_i``:

    mu1 = E[b_i / b]      (always 1/n)
    mu2 = E[1 / b_i]
    mu3 = E[b_i / b^2]
    s2  = Var(b_i / b)
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import SupportTooLargeError

ENUMERATION_CAP = 10**6


@dataclass(frozen=True)
class TwoPoint:
    """``hi`` with probability ``p_hi``, otherwise ``lo``.

    The {1, 60} instance with ``p_hi = 0.8`` is the skewed straggler law used
    in the image experiments (often loosely called a Bernoulli distribution).
    """

    lo: int
    hi: int
    p_hi: float

    def __post_init__(self):
        if not (1 <= self.lo <= self.hi):
            raise ValueError(f"need 1 <= lo <= hi, got lo={self.lo}, hi={self.hi}")
        if not (0.0 <= self.p_hi <= 1.0):
            raise ValueError(f"p_hi must be a probability, got {self.p_hi}")

    def support(self):
        if self.lo == self.hi:
            return np.array([self.lo]), np.array([1.0])
        vals, probs = [], []
        if self.p_hi < 1.0:
            vals.append(self.lo)
            probs.append(1.0 - self.p_hi)
        if self.p_hi > 0.0:
            vals.append(self.hi)
            probs.append(self.p_hi)
        return np.array(vals), np.array(probs)

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        return np.where(u < self.p_hi, self.hi, self.lo).astype(np.int64)


@dataclass(frozen=True)
class Constant:
    c: int

    def __post_init__(self):
        if self.c < 1:
            raise ValueError(f"constant batch must be >= 1, got {self.c}")

    def support(self):
        return np.array([self.c]), np.array([1.0])

    def sample(self, rng: np.random.Generator, size=None):
        # consume nothing: constant draws need no randomness
        if size is None:
            return np.int64(self.c)
        return np.full(size, self.c, dtype=np.int64)


@dataclass(frozen=True)
class UniformRange:
    """Uniform on the integers ``lo..hi`` inclusive."""

    lo: int
    hi: int

    def __post_init__(self):
        if not (1 <= self.lo <= self.hi):
            raise ValueError(f"need 1 <= lo <= hi, got lo={self.lo}, hi={self.hi}")

    def support(self):
        vals = np.arange(self.lo, self.hi + 1)
        return vals, np.full(vals.size, 1.0 / vals.size)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.integers(self.lo, self.hi, endpoint=True, size=size, dtype=np.int64)


@dataclass(frozen=True)
class ShiftedGeometric:
    """``P(b = k) = (1 - p)^(k - 1) p`` for ``k >= 1``."""

    p: float

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise ValueError(f"p must lie in (0, 1], got {self.p}")

    def support(self):
        raise SupportTooLargeError("shifted geometric has infinite support")

    def sample(self, rng: np.random.Generator, size=None):
        return rng.geometric(self.p, size=size).astype(np.int64)


StragglerModel = Union[TwoPoint, Constant, UniformRange, ShiftedGeometric]


def mean_batch(model: StragglerModel) -> float:
    """``E[b_i]``."""
    if isinstance(model, ShiftedGeometric):
        return 1.0 / model.p
    vals, probs = model.support()
    return float(probs @ vals)


def inverse_mean(model: StragglerModel) -> float:
    """Exact ``mu2 = E[1/b_i]``, a single-variable expectation."""
    if isinstance(model, ShiftedGeometric):
        p = model.p
        if p == 1.0:
            return 1.0
        # sum_k (1-p)^(k-1) p / k = -p ln(p) / (1 - p)
        return -p * math.log(p) / (1.0 - p)
    vals, probs = model.support()
    return float(probs @ (1.0 / vals))


@dataclass(frozen=True)
class MomentSet:
    n: int
    mu1: float
    mu2: float
    mu3: float
    s2: float
    source: str
    se_mu1: float | None = None
    se_mu2: float | None = None
    se_mu3: float | None = None
    se_s2: float | None = None

    def to_dict(self) -> dict:
        se = None
        if self.source == "monte_carlo":
            se = {"mu1": self.se_mu1, "mu2": self.se_mu2, "mu3": self.se_mu3, "s2": self.se_s2}
        return {
            "n": self.n,
            "source": self.source,
            "mu1": self.mu1,
            "mu2": self.mu2,
            "mu3": self.mu3,
            "s2": self.s2,
            "se": se,
        }


def sample_batches(model: StragglerModel, n: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Draw ``B = (b_1..b_n)`` and return it with ``b = sum(B)``."""
    if n < 2:
        raise ValueError(f"need at least 2 workers, got n={n}")
    B = np.asarray(model.sample(rng, n), dtype=np.int64)
    return B, int(B.sum())


def _ratio_stats(B: np.ndarray) -> tuple[np.ndarray, ...]:
    """Per-outcome averages over workers of b_i/b, 1/b_i, b_i/b^2, (b_i/b - 1/n)^2."""
    n = B.shape[-1]
    b = B.sum(axis=-1, keepdims=True)
    r = B / b
    c = r - 1.0 / n
    return (
        r.mean(axis=-1),
        (1.0 / B).mean(axis=-1),
        (B / (b * b)).mean(axis=-1),
        (c * c).mean(axis=-1),
    )


def moments_closed_form(model: StragglerModel, n: int, cap: int = ENUMERATION_CAP) -> MomentSet:
    """Exact moments by enumerating every joint outcome of ``(b_1..b_n)``.

    Each outcome is weighted by its product probability. Raises
    SupportTooLargeError when ``|support|^n`` exceeds ``cap`` or the support
    is infinite.
    """
    vals, probs = model.support()
    k = vals.size
    if k**n > cap:
        raise SupportTooLargeError(f"{k}^{n} joint outcomes exceed the enumeration cap {cap}")
    idx = np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int64).reshape(-1, n)
    B = vals[idx]
    weight = probs[idx].prod(axis=1)
    mu1, _, mu3, s2 = (float(weight @ s) for s in _ratio_stats(B))
    return MomentSet(n=n, mu1=mu1, mu2=inverse_mean(model), mu3=mu3, s2=s2, source="closed_form")


def moments_monte_carlo(model: StragglerModel, n: int, trials: int, rng: np.random.Generator) -> MomentSet:
    """Monte Carlo moments pooled over workers and trials.

    Standard errors treat each trial (a worker-average) as one observation,
    since the ratios ``b_i/b`` within a trial are dependent.
    """
    if trials < 1000:
        raise ValueError(f"need at least 1000 trials, got {trials}")
    B = model.sample(rng, (trials, n))
    stats = _ratio_stats(B)
    means = [float(s.mean()) for s in stats]
    ses = [float(s.std(ddof=1) / math.sqrt(trials)) for s in stats]
    return MomentSet(
        n=n,
        mu1=means[0],
        mu2=means[1],
        mu3=means[2],
        s2=means[3],
        source="monte_carlo",
        se_mu1=ses[0],
        se_mu2=ses[1],
        se_mu3=ses[2],
        se_s2=ses[3],
    )


def moments(model: StragglerModel, n: int, trials: int = 10**6, rng: np.random.Generator | None = None) -> MomentSet:
    """Closed-form moments when enumeration is feasible, else Monte Carlo."""
    try:
        return moments_closed_form(model, n)
    except SupportTooLargeError:
        return moments_monte_carlo(model, n, trials, rng if rng is not None else np.random.default_rng(0))


def expected_inverse_sum(model: StragglerModel, count: int = 2) -> float:
    """``E[1 / (b_1 + ... + b_count)]`` by enumeration of the finite support."""
    vals, probs = model.support()
    total = 0.0
    for combo in itertools.product(range(vals.size), repeat=count):
        total += float(np.prod(probs[list(combo)])) / float(vals[list(combo)].sum())
    return total


def from_dict(spec: dict) -> StragglerModel:
    """Build a model from ``{"type": ..., **params}``."""
    kinds = {
        "two_point": (TwoPoint, ("lo", "hi", "p_hi")),
        "constant": (Constant, ("c",)),
        "uniform_range": (UniformRange, ("lo", "hi")),
        "shifted_geometric": (ShiftedGeometric, ("p",)),
    }
    kind = spec.get("type")
    if kind not in kinds:
        raise ValueError(f"unknown straggler type {kind!r}; expected one of {sorted(kinds)}")
    cls, fields = kinds[kind]
    extra = set(spec) - set(fields) - {"type"}
    if extra:
        raise ValueError(f"unknown straggler field(s) {sorted(extra)}")
    missing = [f for f in fields if f not in spec]
    if missing:
        raise ValueError(f"missing straggler field(s) {missing}")
    return cls(**{f: spec[f] for f in fields})
