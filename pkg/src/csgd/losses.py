"""Cost functions, their gradients, and the per-worker quantities built on them.

Three losses are provided:

* :class:`Quadratic` -- ``f(w, x) = 0.5 * |w - x|^2``. Paired with a
  :class:`~csgd.data.GaussianSource` it gives the quadratic-Gaussian test bed
  where ``grad F_i``, ``F``, ``sigma^2`` and ``D`` all have closed forms.
* :class:`LinearSoftmax` -- cross-entropy of a softmax classifier with one
  linear (activation-free) hidden layer.
* :class:`ReluSoftmax` -- the same network with a ReLU hidden layer.

Every loss can optionally clip per-sample gradients to norm ``clip``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Batch, DataSource, GaussianSource, ShardSource
from .errors import DimensionMismatchError, EmptyBatchError, UnavailableError


def _clip_rows(G: np.ndarray, clip: float | None) -> np.ndarray:
    if clip is None:
        return G
    norms = np.linalg.norm(G, axis=-1, keepdims=True)
    scale = np.minimum(1.0, clip / np.maximum(norms, 1e-300))
    return G * scale


@dataclass(frozen=True)
class Quadratic:
    dim: int
    clip: float | None = None

    def init_params(self, rng: np.random.Generator | None = None) -> np.ndarray:
        return np.zeros(self.dim)

    def losses(self, w: np.ndarray, batch: Batch) -> np.ndarray:
        diff = w - batch.x
        return 0.5 * (diff * diff).sum(axis=1)

    def per_sample_gradients(self, w: np.ndarray, batch: Batch) -> np.ndarray:
        return _clip_rows(w - batch.x, self.clip)

    def mean_gradient(self, w: np.ndarray, batch: Batch) -> np.ndarray:
        if self.clip is None:
            return w - batch.x.mean(axis=0)
        return self.per_sample_gradients(w, batch).mean(axis=0)


@dataclass(frozen=True)
class _TwoLayerSoftmax:
    """Softmax classifier ``x -> W2 act(W1 x + b1) + b2`` with cross-entropy.

    Parameters are flattened as ``[W1 (h x p), b1 (h), W2 (c x h), b2 (c)]``.
    """

    input_dim: int
    classes: int
    hidden_dim: int = 64
    clip: float | None = None

    relu = False

    @property
    def dim(self) -> int:
        p, h, c = self.input_dim, self.hidden_dim, self.classes
        return h * p + h + c * h + c

    def unpack(self, w: np.ndarray):
        p, h, c = self.input_dim, self.hidden_dim, self.classes
        i = 0
        W1 = w[i : i + h * p].reshape(h, p)
        i += h * p
        b1 = w[i : i + h]
        i += h
        W2 = w[i : i + c * h].reshape(c, h)
        i += c * h
        b2 = w[i : i + c]
        return W1, b1, W2, b2

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        p, h, c = self.input_dim, self.hidden_dim, self.classes
        a1, a2 = 1.0 / np.sqrt(p), 1.0 / np.sqrt(h)
        return np.concatenate(
            [
                rng.uniform(-a1, a1, h * p),
                np.zeros(h),
                rng.uniform(-a2, a2, c * h),
                np.zeros(c),
            ]
        )

    def _forward(self, w, X):
        W1, b1, W2, b2 = self.unpack(w)
        z1 = X @ W1.T + b1
        hid = np.maximum(z1, 0.0) if self.relu else z1
        logits = hid @ W2.T + b2
        logits = logits - logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        probs = expl / expl.sum(axis=1, keepdims=True)
        return z1, hid, logits, probs

    def losses(self, w: np.ndarray, batch: Batch) -> np.ndarray:
        _, _, logits, _ = self._forward(w, batch.x)
        lse = np.log(np.exp(logits).sum(axis=1))
        return lse - logits[np.arange(len(batch.y)), batch.y]

    def _deltas(self, w, batch):
        W1, b1, W2, b2 = self.unpack(w)
        z1, hid, _, probs = self._forward(w, batch.x)
        dlogits = probs
        dlogits[np.arange(len(batch.y)), batch.y] -= 1.0
        dhid = dlogits @ W2
        dz1 = dhid * (z1 > 0) if self.relu else dhid
        return hid, dlogits, dz1

    def per_sample_gradients(self, w: np.ndarray, batch: Batch) -> np.ndarray:
        X = batch.x
        hid, dlogits, dz1 = self._deltas(w, batch)
        m = X.shape[0]
        G = np.concatenate(
            [
                np.einsum("bh,bp->bhp", dz1, X).reshape(m, -1),
                dz1,
                np.einsum("bc,bh->bch", dlogits, hid).reshape(m, -1),
                dlogits,
            ],
            axis=1,
        )
        return _clip_rows(G, self.clip)

    def mean_gradient(self, w: np.ndarray, batch: Batch) -> np.ndarray:
        if self.clip is not None:
            return self.per_sample_gradients(w, batch).mean(axis=0)
        X = batch.x
        m = X.shape[0]
        hid, dlogits, dz1 = self._deltas(w, batch)
        return np.concatenate(
            [
                (dz1.T @ X).ravel() / m,
                dz1.sum(axis=0) / m,
                (dlogits.T @ hid).ravel() / m,
                dlogits.sum(axis=0) / m,
            ]
        )


@dataclass(frozen=True)
class LinearSoftmax(_TwoLayerSoftmax):
    """Hidden layer without activation; convex in each layer separately."""

    relu = False


@dataclass(frozen=True)
class ReluSoftmax(_TwoLayerSoftmax):
    relu = True


LossModel = Quadratic | LinearSoftmax | ReluSoftmax


@dataclass(frozen=True)
class GradientEstimate:
    """Local mini-batch average ``gbar`` of ``b`` per-sample gradients."""

    worker: int
    gbar: np.ndarray
    b: int
    gamma: float


def _check_w(model, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (model.dim,):
        raise DimensionMismatchError(f"parameter vector has shape {w.shape}, model expects ({model.dim},)")
    return w


def gradient(model: LossModel, w: np.ndarray, x, y=None) -> np.ndarray:
    """Gradient of ``f(w, x)`` for a single sample."""
    w = _check_w(model, w)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] != 1:
        raise DimensionMismatchError("gradient takes one sample; use mean_gradient for batches")
    expected = model.dim if isinstance(model, Quadratic) else model.input_dim
    if x.shape[1] != expected:
        raise DimensionMismatchError(f"sample has dimension {x.shape[1]}, model expects {expected}")
    batch = Batch(x, None if y is None else np.array([int(y)]))
    return model.per_sample_gradients(w, batch)[0]


def mini_batch_gradient(
    model: LossModel,
    source: DataSource,
    worker: int,
    w: np.ndarray,
    b: int,
    rng: np.random.Generator,
) -> GradientEstimate:
    """Average of ``b`` per-sample gradients drawn from worker ``worker``'s distribution."""
    if b < 1:
        raise EmptyBatchError(f"batch size must be >= 1, got {b}")
    w = _check_w(model, w)
    batch = source.sample(worker, int(b), rng)
    return GradientEstimate(worker, model.mean_gradient(w, batch), int(b), float(source.gammas[worker]))


def _closed_form_quadratic(model, source) -> bool:
    return isinstance(model, Quadratic) and isinstance(source, GaussianSource)


def true_worker_gradient(model: LossModel, source: DataSource, worker: int, w: np.ndarray) -> np.ndarray:
    """Exact ``grad F_i(w)``.

    Closed form for the quadratic-Gaussian pair (with clipping only when the
    data are noiseless) and exact shard averages for finite datasets.
    """
    w = _check_w(model, w)
    if _closed_form_quadratic(model, source):
        g = w - source.means[worker]
        if model.clip is None:
            return g
        if source.noise_sd == 0.0:
            return _clip_rows(g[None, :], model.clip)[0]
        raise UnavailableError("clipped gradients of noisy Gaussian data have no closed form")
    if isinstance(source, ShardSource):
        return model.per_sample_gradients(w, source.shards[worker]).mean(axis=0)
    raise UnavailableError(f"no exact worker gradient for {type(model).__name__} on {type(source).__name__}")


def global_gradient(model: LossModel, source: DataSource, w: np.ndarray) -> np.ndarray:
    """``grad F(w) = sum_i gamma_i grad F_i(w)``."""
    grads = np.stack([true_worker_gradient(model, source, i, w) for i in range(source.n)])
    return source.gammas @ grads


def draw_eval_set(source: DataSource, samples_per_worker: int, rng: np.random.Generator) -> list[Batch]:
    """Fixed held-out samples, one batch per worker, for Monte Carlo cost estimates."""
    if isinstance(source, ShardSource):
        return list(source.shards)
    return [source.sample(i, samples_per_worker, rng) for i in range(source.n)]


def global_cost(model: LossModel, source: DataSource, w: np.ndarray, eval_set: list[Batch] | None = None) -> float:
    """``F(w) = sum_i gamma_i E_{Q_i}[f(w, X)]``.

    Closed form for the quadratic-Gaussian pair, exact over finite shards,
    otherwise the average over ``eval_set``.
    """
    w = _check_w(model, w)
    if _closed_form_quadratic(model, source):
        diff = w - source.means
        per_worker = 0.5 * (diff * diff).sum(axis=1) + 0.5 * model.dim * source.noise_sd**2
        return float(source.gammas @ per_worker)
    if eval_set is None:
        if not isinstance(source, ShardSource):
            raise UnavailableError("global_cost needs an eval_set for sampled data")
        eval_set = list(source.shards)
    return float(sum(g * model.losses(w, batch).mean() for g, batch in zip(source.gammas, eval_set)))


def optimum(model: LossModel, source: DataSource) -> np.ndarray:
    """``w* = sum_i gamma_i m_i`` for the quadratic-Gaussian pair."""
    if not _closed_form_quadratic(model, source) or model.clip is not None:
        raise UnavailableError("the minimizer has a closed form only for unclipped quadratic-Gaussian")
    return source.gammas @ source.means


def dispersion_terms(model: LossModel, source: DataSource, w: np.ndarray) -> np.ndarray:
    """Rows ``Delta_i = n gamma_i grad F_i(w) - grad F(w)``."""
    n = source.n
    grads = np.stack([true_worker_gradient(model, source, i, w) for i in range(n)])
    gF = source.gammas @ grads
    return n * source.gammas[:, None] * grads - gF


def dispersion_D(model: LossModel, source: DataSource, probes) -> float:
    """``max_w (1/n^2) sum_i |Delta_i(w)|^2`` over the probe points."""
    n = source.n
    best = 0.0
    for w in np.atleast_2d(np.asarray(probes, dtype=float)):
        delta = dispersion_terms(model, source, w)
        best = max(best, float((delta * delta).sum()) / n**2)
    return best


def gradient_variance(
    model: LossModel,
    source: DataSource,
    w: np.ndarray | None = None,
    samples: int = 2000,
    rng: np.random.Generator | None = None,
) -> tuple[float, str]:
    """Bound ``sigma^2`` on ``V(g_i) = E|g_i|^2 - |E g_i|^2``, with its provenance.

    Exact ``d * noise_sd^2`` for unclipped quadratic-Gaussian; otherwise the
    largest per-worker plug-in estimate at ``w``.
    """
    if _closed_form_quadratic(model, source) and model.clip is None:
        return model.dim * source.noise_sd**2, "closed_form"
    if w is None:
        raise ValueError("a probe point w is needed for the plug-in variance estimate")
    rng = rng if rng is not None else np.random.default_rng(0)
    w = _check_w(model, w)
    best = 0.0
    for i in range(source.n):
        G = model.per_sample_gradients(w, source.sample(i, samples, rng))
        best = max(best, float(G.var(axis=0, ddof=1).sum()))
    return best, "plug_in"


def sample_batch_means(
    model: LossModel,
    source: DataSource,
    w: np.ndarray,
    B: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw ``gbar_i`` for every entry of a ``(trials, n)`` batch-size array.

    For unclipped quadratic-Gaussian the mean of ``b`` draws is sampled from
    its exact law ``N(w - m_i, noise_sd^2 / b)``; other pairs loop over
    :func:`mini_batch_gradient`.
    """
    w = _check_w(model, w)
    B = np.asarray(B)
    T, n = B.shape
    if _closed_form_quadratic(model, source) and model.clip is None:
        z = rng.standard_normal((T, n, model.dim))
        return (w - source.means)[None, :, :] - source.noise_sd * z / np.sqrt(B)[:, :, None]
    out = np.empty((T, n, model.dim))
    for t in range(T):
        for i in range(n):
            out[t, i] = mini_batch_gradient(model, source, i, w, int(B[t, i]), rng).gbar
    return out
