"""Decentralized SGD loop: compute phase, message formation, consensus, update.

Parameters live in an ``n x d`` array ``W`` whose row ``i`` is worker ``i``'s
iterate. Each iteration:

1. every worker draws ``b_i`` and averages ``b_i`` gradients at its own row;
2. worker ``i`` forms the message ``w_i - t * n * r_i * gamma_i * gbar_i``
   with ``r_i = 1`` (equal) or ``n b_i / b`` (proportional);
3. messages are averaged exactly (perfect) or by ``m`` gossip rounds;
4. the consensus output becomes the next iterate.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as streams
from .config import ExperimentConfig
from .data import (
    ClassGaussianSource,
    GaussianSource,
    ShardSource,
    class_means,
    load_labeled,
    partition_by_class,
    synthetic_classes,
    uniform_gammas,
)
from .errors import DegenerateStragglersError, DimensionMismatchError, MissingWorkerError, UnavailableError
from .estimators import BoundReport, convergence_condition, relative_weights
from .losses import (
    LinearSoftmax,
    Quadratic,
    ReluSoftmax,
    dispersion_D,
    draw_eval_set,
    global_cost,
    gradient_variance,
    mini_batch_gradient,
)
from .straggler import from_dict as straggler_from_dict
from .straggler import moments as straggler_moments
from .topology import (
    MixingMatrix,
    build_graph,
    complete,
    disagreement,
    gossip,
    laplacian_matrix,
    metropolis_matrix,
    path,
    random_geometric,
    ring,
    second_eigenvalue,
)

log = logging.getLogger(__name__)

PERFECT = "perfect"
APPROXIMATE = "approximate"


@dataclass
class WorkerState:
    worker: int
    w: np.ndarray
    last_b: int
    message: np.ndarray


@dataclass
class MetricsRecord:
    iteration: int
    costs: np.ndarray | None
    disagreement_max: float
    disagreement_mean: float
    message_disagreement_max: float
    batches: np.ndarray | None
    step_size: float
    ms_compute: float = 0.0
    ms_consensus: float = 0.0


# -- phases -------------------------------------------------------------------


def form_messages(W: np.ndarray, G: np.ndarray, B: np.ndarray, gammas: np.ndarray, weighting: str, t: float) -> np.ndarray:
    """Initial consensus messages for one iteration.

    ``equal``:        ``w_i - t n gamma_i gbar_i``
    ``proportional``: ``w_i - t n^2 (b_i / b) gamma_i gbar_i``
    """
    W = np.asarray(W, dtype=float)
    G = np.asarray(G, dtype=float)
    if G.shape[0] != W.shape[0] or len(B) != W.shape[0]:
        raise MissingWorkerError(f"need one estimate per worker: {W.shape[0]} workers, {G.shape[0]} gradients, {len(B)} batch sizes")
    if G.shape != W.shape:
        raise DimensionMismatchError(f"gradients have shape {G.shape}, parameters {W.shape}")
    n = W.shape[0]
    coef = (t * n) * (relative_weights(weighting, np.asarray(B)) * gammas)
    return W - coef[:, None] * G


def consensus_phase(messages: np.ndarray, mixing: MixingMatrix, mode: str, rounds: int = 0) -> np.ndarray:
    """Perfect mode replaces every row by the column mean; approximate gossips ``rounds`` times."""
    M = np.asarray(messages, dtype=float)
    if M.ndim != 2 or M.shape[0] != mixing.n:
        raise DimensionMismatchError(f"messages have shape {M.shape}, network has {mixing.n} workers")
    if mode == PERFECT:
        return np.broadcast_to(M.mean(axis=0), M.shape).copy()
    if mode == APPROXIMATE:
        return gossip(M, mixing, rounds)
    raise ValueError(f"unknown consensus mode {mode!r}")


# -- setup --------------------------------------------------------------------


def build_topology(cfg: ExperimentConfig):
    spec = cfg.topology
    kind, n = spec["type"], cfg.n
    if kind == "ring":
        g = ring(n)
    elif kind == "path":
        g = path(n)
    elif kind == "complete":
        g = complete(n)
    elif kind == "random_geometric":
        seed = spec["seed"] if spec["seed"] is not None else cfg.seed
        g = random_geometric(n, spec["radius"], streams.stream(seed, streams.SETUP, 0, 1))
    else:
        g = build_graph(n, spec["edges"])
    if cfg.mixing["type"] == "laplacian":
        mixing = laplacian_matrix(g, cfg.mixing["eps"])
    else:
        mixing = metropolis_matrix(g)
    return g, mixing


def build_problem(cfg: ExperimentConfig):
    """Return ``(model, source)`` for the configured loss and data."""
    n = cfg.n
    rng = streams.stream(cfg.seed, streams.SETUP, 0, 0)
    data, loss = cfg.data, cfg.loss
    gammas = None if cfg.gammas is None else np.asarray(cfg.gammas, dtype=float)
    if data["type"] == "gaussian":
        d = data["dim"]
        means = np.asarray(data["means"], dtype=float) if data["means"] is not None else data["spread"] * rng.standard_normal((n, d))
        source = GaussianSource(means, data["noise_sd"], gammas if gammas is not None else uniform_gammas(n))
        return Quadratic(d, clip=loss["clip"]), source

    if data["type"] == "gaussian_classes":
        p = data["input_dim"]
        if data["per_class"] is None:
            source = ClassGaussianSource(
                class_means(n, p, data["spacing"]), data["noise_sd"], gammas if gammas is not None else uniform_gammas(n)
            )
        else:
            X, y = synthetic_classes(n, p, data["spacing"], data["noise_sd"], data["per_class"], rng)
            source = partition_by_class(X, y, n, gammas)
    else:
        X, y = load_labeled(data["images"], data["labels"])
        if data["limit"] is not None:
            X, y = X[: data["limit"]], y[: data["limit"]]
        source = partition_by_class(X, y, n, gammas)
        p = X.shape[1]

    cls = LinearSoftmax if loss["type"] == "linear_softmax" else ReluSoftmax
    return cls(input_dim=p, classes=n, hidden_dim=loss["hidden_dim"], clip=loss["clip"]), source


# -- simulation ---------------------------------------------------------------


@dataclass
class ExperimentResult:
    records: list[MetricsRecord]
    W: np.ndarray
    W_avg: np.ndarray
    avg_iterate_costs: np.ndarray
    lambda2: float
    config: ExperimentConfig = field(repr=False)

    @property
    def avg_iterate_cost(self) -> float:
        return float(self.avg_iterate_costs.mean())

    def cost_curve(self) -> np.ndarray:
        """Worker-averaged global cost per evaluated iteration."""
        return np.array([r.costs.mean() for r in self.records if r.costs is not None])


class Simulation:
    """All immutable objects one experiment needs, built once from a config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.n = cfg.n
        self.graph, self.mixing = build_topology(cfg)
        self.lambda2 = second_eigenvalue(self.mixing)
        self.straggler = straggler_from_dict(cfg.straggler)
        self.model, self.source = build_problem(cfg)
        if self.source.n != self.n:
            raise DimensionMismatchError(f"data has {self.source.n} workers, topology has {self.n}")
        self.gammas = self.source.gammas
        self.mode, self.rounds = cfg.consensus_mode
        self.eval_set = draw_eval_set(self.source, cfg.eval_samples, streams.stream(cfg.seed, streams.EVAL))
        w0 = self.model.init_params(streams.stream(cfg.seed, streams.INIT))
        self.W0 = np.tile(w0, (self.n, 1))

    def step_size(self, k: int) -> float:
        t = self.cfg.step_size
        return t if self.cfg.schedule == "constant" else t / math.sqrt(k + 1)

    def costs(self, W: np.ndarray) -> np.ndarray:
        if (W == W[0]).all():
            c = global_cost(self.model, self.source, W[0], self.eval_set)
            return np.full(self.n, c)
        return np.array([global_cost(self.model, self.source, w, self.eval_set) for w in W])

    def _local(self, k: int, i: int, w: np.ndarray):
        seed = self.cfg.seed
        b = int(self.straggler.sample(streams.stream(seed, streams.BATCH, k, i)))
        est = mini_batch_gradient(self.model, self.source, i, w, b, streams.stream(seed, streams.DATA, k, i))
        return est.gbar, b

    def compute_phase(self, W: np.ndarray, k: int, pool: ThreadPoolExecutor | None = None):
        if pool is None:
            out = [self._local(k, i, W[i]) for i in range(self.n)]
        else:
            out = list(pool.map(lambda i: self._local(k, i, W[i]), range(self.n)))
        G = np.stack([g for g, _ in out])
        B = np.array([b for _, b in out], dtype=np.int64)
        return G, B

    def run_iteration(self, W: np.ndarray, k: int, pool: ThreadPoolExecutor | None = None):
        """Advance from iterate ``k`` to ``k + 1``; returns ``(W_next, record)``."""
        t = self.step_size(k)
        t0 = time.perf_counter()
        G, B = self.compute_phase(W, k, pool)
        messages = form_messages(W, G, B, self.gammas, self.cfg.weighting, t)
        t1 = time.perf_counter()
        W_next = consensus_phase(messages, self.mixing, self.mode, self.rounds)
        t2 = time.perf_counter()
        d_max, d_mean = disagreement(W_next)
        m_max, _ = disagreement(messages)
        evaluate = (k + 1) % self.cfg.eval_every == 0 or k + 1 == self.cfg.iterations
        record = MetricsRecord(
            iteration=k + 1,
            costs=self.costs(W_next) if evaluate else None,
            disagreement_max=d_max,
            disagreement_mean=d_mean,
            message_disagreement_max=m_max,
            batches=B,
            step_size=t,
            ms_compute=1e3 * (t1 - t0),
            ms_consensus=1e3 * (t2 - t1),
        )
        return W_next, record

    def initial_record(self) -> MetricsRecord:
        return MetricsRecord(0, self.costs(self.W0), 0.0, 0.0, 0.0, None, 0.0)

    def run(self) -> ExperimentResult:
        K = self.cfg.iterations
        W = self.W0.copy()
        W_avg = np.zeros_like(W)
        records = [self.initial_record()]
        pool = ThreadPoolExecutor(self.cfg.threads) if self.cfg.threads > 1 else None
        try:
            for k in range(K):
                W, rec = self.run_iteration(W, k, pool)
                W_avg += (W - W_avg) / (k + 1)
                records.append(rec)
                if log.isEnabledFor(logging.DEBUG) and rec.costs is not None:
                    log.debug("iter %d mean cost %.6g disagreement %.3g", rec.iteration, rec.costs.mean(), rec.disagreement_max)
        finally:
            if pool is not None:
                pool.shutdown()
        avg_costs = self.costs(W_avg) if K > 0 else self.costs(W)
        return ExperimentResult(records, W, W_avg if K > 0 else W.copy(), avg_costs, self.lambda2, self.cfg)

    def states(self, W: np.ndarray, messages: np.ndarray | None = None, B=None) -> list[WorkerState]:
        return [
            WorkerState(i, W[i].copy(), 0 if B is None else int(B[i]), W[i].copy() if messages is None else messages[i].copy())
            for i in range(self.n)
        ]

    # -- analysis -------------------------------------------------------------

    def analysis_inputs(self):
        """``(sigma2, sigma2_source, D, moments)`` for the condition report.

        Closed forms for the quadratic-Gaussian problem; otherwise plug-in
        estimates at the initial point, with worker gradients taken over the
        evaluation set.
        """
        w0 = self.W0[0]
        probe_rng = streams.stream(self.cfg.seed, streams.SETUP, 0, 3)
        sigma2, source_tag = gradient_variance(self.model, self.source, w0, rng=probe_rng)
        try:
            D = dispersion_D(self.model, self.source, [w0])
        except UnavailableError:
            proxy = ShardSource(self.eval_set, self.gammas)
            D = dispersion_D(self.model, proxy, [w0])
        mom = straggler_moments(self.straggler, self.n, trials=10**5, rng=streams.stream(self.cfg.seed, streams.SETUP, 0, 2))
        return sigma2, source_tag, D, mom

    def bound_report(self) -> BoundReport:
        sigma2, _, D, mom = self.analysis_inputs()
        try:
            return convergence_condition(D, sigma2, mom, self.gammas)
        except DegenerateStragglersError as err:
            return err.report


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return Simulation(cfg).run()


# -- output -------------------------------------------------------------------

CSV_COLUMNS = ("iteration", "worker", "global_cost", "disagreement_max", "b_i", "phase_ms_compute", "phase_ms_consensus")


def write_metrics_csv(result: ExperimentResult, path, timing: bool = True) -> int:
    """One row per (iteration, worker) for iterations ``1..K``; returns the row count."""
    rows = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in result.records[1:]:
            for i in range(len(rec.batches)):
                writer.writerow(
                    [
                        rec.iteration,
                        i,
                        "" if rec.costs is None else repr(float(rec.costs[i])),
                        repr(rec.disagreement_max),
                        int(rec.batches[i]),
                        repr(rec.ms_compute) if timing else "",
                        repr(rec.ms_consensus) if timing else "",
                    ]
                )
                rows += 1
    return rows


def summary(result: ExperimentResult, report: BoundReport | None) -> dict:
    last = result.records[-1]
    return {
        "iterations": len(result.records) - 1,
        "seed": result.config.seed,
        "weighting": result.config.weighting,
        "consensus": result.config.consensus,
        "final_costs": [float(c) for c in last.costs],
        "avg_iterate_cost": result.avg_iterate_cost,
        "lambda2": result.lambda2,
        "bound_report": None if report is None else report.to_dict(),
    }


def summary_path(metrics_path) -> Path:
    p = Path(metrics_path)
    return p.with_name(p.stem + ".summary.json")
