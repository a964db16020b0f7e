"""Equal and proportional gradient combiners and their variance bounds.

With per-worker mini-batch averages ``gbar_i`` over ``b_i`` samples and
``b = sum_i b_i``:

    equal:        g_e = sum_i gamma_i gbar_i
    proportional: g_p = sum_i (n b_i / b) gamma_i gbar_i

Both are unbiased for ``grad F``. Variances use the scalar reduction
``V(v) = E|v|^2 - |E v|^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import GAMMA_TOL
from .errors import DegenerateStragglersError, MissingWorkerError, PriorMismatchError
from .losses import GradientEstimate, sample_batch_means
from .straggler import MomentSet

EQUAL = "equal"
PROPORTIONAL = "proportional"
WEIGHTINGS = (EQUAL, PROPORTIONAL)


def relative_weights(weighting: str, B: np.ndarray) -> np.ndarray:
    """Per-worker factor multiplying ``gamma_i gbar_i``.

    ``1.0`` for equal weighting and ``n b_i / b`` for proportional. The ratio
    is formed from integers, so constant batches give exactly ``1.0`` and the
    two schemes coincide bit for bit.
    """
    B = np.asarray(B)
    if weighting == EQUAL:
        return np.ones(B.shape, dtype=float)
    if weighting == PROPORTIONAL:
        n = B.shape[-1]
        return (n * B) / B.sum(axis=-1, keepdims=True)
    raise ValueError(f"unknown weighting {weighting!r}; expected one of {WEIGHTINGS}")


def _unpack(estimates: Sequence[GradientEstimate]):
    if not estimates:
        raise MissingWorkerError("no gradient estimates given")
    by_worker = sorted(estimates, key=lambda e: e.worker)
    n = len(by_worker)
    workers = [e.worker for e in by_worker]
    if workers != list(range(n)):
        raise MissingWorkerError(f"expected one estimate per worker 0..{n - 1}, got workers {workers}")
    gammas = np.array([e.gamma for e in by_worker])
    if abs(gammas.sum() - 1.0) > GAMMA_TOL or (gammas < 0).any():
        raise PriorMismatchError(f"priors must be nonnegative and sum to 1, got sum {gammas.sum()!r}")
    G = np.stack([np.asarray(e.gbar, dtype=float) for e in by_worker])
    B = np.array([e.b for e in by_worker], dtype=np.int64)
    return G, B, gammas


def combine(weighting: str, G: np.ndarray, B: np.ndarray, gammas: np.ndarray) -> np.ndarray:
    """Array form of both combiners; ``G`` is ``(..., n, d)`` and ``B`` is ``(..., n)``."""
    coef = relative_weights(weighting, B) * gammas
    return np.einsum("...i,...id->...d", coef, G)


def combine_equal(estimates: Sequence[GradientEstimate]) -> np.ndarray:
    G, B, gammas = _unpack(estimates)
    return combine(EQUAL, G, B, gammas)


def combine_proportional(estimates: Sequence[GradientEstimate]) -> np.ndarray:
    G, B, gammas = _unpack(estimates)
    return combine(PROPORTIONAL, G, B, gammas)


def variance_bound_equal(mu2: float, sigma2: float, gammas) -> float:
    """``mu2 * sigma^2 * sum gamma_i^2``."""
    g = np.asarray(gammas, dtype=float)
    return float(mu2 * sigma2 * (g @ g))


def variance_bound_proportional(n: int, mu3: float, sigma2: float, gammas, s2: float, D: float) -> float:
    """``n^2 mu3 sigma^2 sum gamma_i^2 + n^3 s^2 D``."""
    g = np.asarray(gammas, dtype=float)
    return float(n**2 * mu3 * sigma2 * (g @ g) + n**3 * s2 * D)


@dataclass(frozen=True)
class BoundReport:
    sigma2_e_bound: float
    sigma2_p_bound: float
    lhs: float
    rhs: float
    proportional_predicted_faster: bool
    moment_source: str
    predicted_winner: str

    def to_dict(self) -> dict:
        return {
            "sigma2_e_bound": self.sigma2_e_bound,
            "sigma2_p_bound": self.sigma2_p_bound,
            "lhs": self.lhs,
            "rhs": self.rhs if math.isfinite(self.rhs) else None,
            "predicted_winner": self.predicted_winner,
            "moment_source": self.moment_source,
        }


def convergence_condition(D: float, sigma2: float, moments: MomentSet, gammas) -> BoundReport:
    """Evaluate ``D / sigma^2 <= (mu2 - n^2 mu3) sum gamma_i^2 / (n^3 s^2)``.

    Raises DegenerateStragglersError when ``s2 == 0``: the dispersion term
    vanishes, both bounds coincide, and ``err.report`` carries a ``"tie"``.
    """
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    g = np.asarray(gammas, dtype=float)
    n = moments.n
    sum_g2 = float(g @ g)
    e_bound = variance_bound_equal(moments.mu2, sigma2, g)
    p_bound = variance_bound_proportional(n, moments.mu3, sigma2, g, moments.s2, D)
    lhs = D / sigma2
    if moments.s2 <= 0.0:
        report = BoundReport(e_bound, p_bound, lhs, math.inf, True, moments.source, "tie")
        raise DegenerateStragglersError("s2 == 0: equal and proportional bounds coincide", report)
    # n^2 mu3 <= mu2 holds exactly; clamp the rounding residue
    rhs = max(moments.mu2 - n**2 * moments.mu3, 0.0) * sum_g2 / (n**3 * moments.s2)
    faster = lhs <= rhs
    return BoundReport(e_bound, p_bound, lhs, rhs, faster, moments.source, PROPORTIONAL if faster else EQUAL)


@dataclass(frozen=True)
class EstimatorStats:
    """Monte Carlo mean and scalar variance of a vector estimator."""

    mean: np.ndarray
    mean_se: np.ndarray
    variance: float
    variance_se: float
    trials: int


def vector_stats(samples: np.ndarray) -> EstimatorStats:
    """Mean with per-coordinate SE, and ``V = E|v - Ev|^2`` with its SE."""
    X = np.asarray(samples, dtype=float)
    T = X.shape[0]
    mean = X.mean(axis=0)
    mean_se = X.std(axis=0, ddof=1) / math.sqrt(T)
    sq = ((X - mean) ** 2).sum(axis=1)
    var = float(sq.sum() / (T - 1))
    var_se = float(sq.std(ddof=1) / math.sqrt(T))
    return EstimatorStats(mean, mean_se, var, var_se, T)


def simulate_combiners(model, source, w, straggler, trials: int, rng: np.random.Generator, chunk: int = 20_000):
    """Draw ``trials`` independent (g_e, g_p) pairs at a fixed ``w``.

    Both estimators share each trial's batch sizes and local averages.
    Returns ``(stats_equal, stats_proportional)``.
    """
    n = source.n
    ge, gp = [], []
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        B = np.asarray(straggler.sample(rng, (t, n)), dtype=np.int64)
        G = sample_batch_means(model, source, w, B, rng)
        ge.append(combine(EQUAL, G, B, source.gammas))
        gp.append(combine(PROPORTIONAL, G, B, source.gammas))
        done += t
    return vector_stats(np.concatenate(ge)), vector_stats(np.concatenate(gp))
