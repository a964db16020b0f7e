"""Two-worker scalar estimation of ``theta = (A + B) / 2``.

Worker one observes ``M`` i.i.d. draws ``N(A, sigma^2)`` and worker two
observes ``N`` draws ``N(B, sigma^2)``. The Cramer-Rao bound is compared with
the variances of the equal estimator ``(mean(a) + mean(b)) / 2`` and the
proportional estimator ``(sum(a) + sum(b)) / (M + N)``.

No unbiased estimator attains the bound: the score
``(2 / sigma^2) (sum a + sum b - (M A + N B))`` cannot be factored as
``I(theta) (g(x) - theta)``, so a minimum variance unbiased estimator does
not exist. This module checks the consequence numerically -- every variance
sits strictly above the bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .straggler import StragglerModel, expected_inverse_sum, inverse_mean, mean_batch


def _check_counts(M, N):
    if M < 1 or N < 1:
        raise ValueError(f"observation counts must be >= 1, got M={M}, N={N}")


def crlb_fixed(M: int, N: int, sigma2: float) -> float:
    """``sigma^2 / (4 (M + N))``."""
    _check_counts(M, N)
    return sigma2 / (4.0 * (M + N))


def var_equal_fixed(M: int, N: int, sigma2: float) -> float:
    """``sigma^2 / 4 * (1/M + 1/N)``."""
    _check_counts(M, N)
    return sigma2 / 4.0 * (1.0 / M + 1.0 / N)


def var_prop_fixed(M: int, N: int, sigma2: float) -> float:
    """``sigma^2 / (M + N)``."""
    _check_counts(M, N)
    return sigma2 / (M + N)


def ratio_equal_fixed(M: int, N: int) -> float:
    """``var_equal_fixed / crlb_fixed = M/N + N/M + 2``, at least 4."""
    _check_counts(M, N)
    return M / N + N / M + 2.0


def bias_prop_fixed(A: float, B: float, M: int, N: int) -> float:
    """``(M A + N B) / (M + N) - (A + B) / 2``."""
    _check_counts(M, N)
    return (M * A + N * B) / (M + N) - 0.5 * (A + B)


def crlb_random(mu: float, sigma2: float) -> float:
    """``sigma^2 / (8 mu)`` with ``mu = E[M] = E[N]``."""
    if mu < 1:
        raise ValueError(f"mean count must be >= 1, got {mu}")
    return sigma2 / (8.0 * mu)


def var_equal_random(mu2: float, sigma2: float) -> float:
    """``sigma^2 mu2 / 2`` with ``mu2 = E[1/M]``."""
    if not (0.0 < mu2 <= 1.0):
        raise ValueError(f"E[1/M] must lie in (0, 1], got {mu2}")
    return sigma2 * mu2 / 2.0


def ratio_equal_random(mu: float, mu2: float) -> float:
    """``4 mu mu2``; Jensen gives ``mu2 >= 1/mu`` so this is at least 4."""
    return 4.0 * mu * mu2


def var_prop_random_lower(model: StragglerModel, sigma2: float) -> float:
    """``sigma^2 E[1 / (M + N)]``, a lower bound on the proportional variance."""
    return sigma2 * expected_inverse_sum(model, 2)


@dataclass(frozen=True)
class Fixed:
    M: int
    N: int

    def __post_init__(self):
        _check_counts(self.M, self.N)


@dataclass(frozen=True)
class Random:
    model: StragglerModel


@dataclass(frozen=True)
class TwoWorkerSetup:
    A: float
    B: float
    sigma2: float
    counts: Fixed | Random

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def theta(self) -> float:
        return 0.5 * (self.A + self.B)


@dataclass(frozen=True)
class Moment:
    value: float
    se: float


@dataclass(frozen=True)
class SimulationReport:
    trials: int
    mean_e: Moment
    mean_p: Moment
    var_e: Moment
    var_p: Moment
    score_mean: Moment
    mean_inverse_total: float


def _mean(x: np.ndarray) -> Moment:
    return Moment(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)))


def _var(x: np.ndarray) -> Moment:
    sq = (x - x.mean()) ** 2
    return Moment(float(sq.sum() / (x.size - 1)), float(sq.std(ddof=1) / math.sqrt(x.size)))


def simulate_estimators(setup: TwoWorkerSetup, trials: int, rng: np.random.Generator) -> SimulationReport:
    """Monte Carlo of both estimators and of the score statistic.

    The sum of ``k`` i.i.d. ``N(mu, sigma^2)`` draws is sampled from its exact
    law ``N(k mu, k sigma^2)``; every quantity here depends on the
    observations only through the two sums.
    """
    if trials < 10**4:
        raise ValueError(f"need at least 10^4 trials, got {trials}")
    if isinstance(setup.counts, Fixed):
        M = np.full(trials, setup.counts.M, dtype=np.int64)
        N = np.full(trials, setup.counts.N, dtype=np.int64)
    else:
        M = np.asarray(setup.counts.model.sample(rng, trials), dtype=np.int64)
        N = np.asarray(setup.counts.model.sample(rng, trials), dtype=np.int64)
    sd = math.sqrt(setup.sigma2)
    sum_a = M * setup.A + sd * np.sqrt(M) * rng.standard_normal(trials)
    sum_b = N * setup.B + sd * np.sqrt(N) * rng.standard_normal(trials)

    g_e = 0.5 * (sum_a / M + sum_b / N)
    g_p = (sum_a + sum_b) / (M + N)
    score = (2.0 / setup.sigma2) * ((sum_a - M * setup.A) + (sum_b - N * setup.B))
    return SimulationReport(
        trials=trials,
        mean_e=_mean(g_e),
        mean_p=_mean(g_p),
        var_e=_var(g_e),
        var_p=_var(g_p),
        score_mean=_mean(score),
        mean_inverse_total=float((1.0 / (M + N)).mean()),
    )


def table(setup: TwoWorkerSetup, report: SimulationReport | None = None) -> dict:
    """One JSON-ready row of closed forms (and Monte Carlo values if given)."""
    s2 = setup.sigma2
    if isinstance(setup.counts, Fixed):
        M, N = setup.counts.M, setup.counts.N
        row = {
            "case": "fixed",
            "crlb": crlb_fixed(M, N, s2),
            "var_equal": var_equal_fixed(M, N, s2),
            "var_prop": var_prop_fixed(M, N, s2),
            "bias_prop": bias_prop_fixed(setup.A, setup.B, M, N),
            "ratio_equal": ratio_equal_fixed(M, N),
        }
    else:
        model = setup.counts.model
        mu, mu2 = mean_batch(model), inverse_mean(model)
        row = {
            "case": "random",
            "crlb": crlb_random(mu, s2),
            "var_equal": var_equal_random(mu2, s2),
            "var_prop": var_prop_random_lower(model, s2),
            "bias_prop": 0.0,
            "ratio_equal": ratio_equal_random(mu, mu2),
        }
    mc = {"mc_mean_e": None, "mc_mean_p": None, "mc_var_e": None, "mc_var_p": None}
    if report is not None:
        mc = {
            "mc_mean_e": report.mean_e.value,
            "mc_mean_p": report.mean_p.value,
            "mc_var_e": report.var_e.value,
            "mc_var_p": report.var_p.value,
        }
    row.update(mc)
    return row
