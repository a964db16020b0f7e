"""Per-worker data distributions and IDX ingestion.

Worker ``i`` only ever samples from its own distribution ``Q_i``. The global
objective weights workers by priors ``gamma_i`` that sum to one.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np

from .errors import BadMagicError, ClassCountMismatchError, TruncatedFileError

GAMMA_TOL = 1e-12


class Batch(NamedTuple):
    x: np.ndarray
    y: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.x.shape[0]


def _check_gammas(gammas, n: int) -> np.ndarray:
    g = np.asarray(gammas, dtype=float)
    if g.shape != (n,):
        raise ValueError(f"need {n} priors, got shape {g.shape}")
    if (g < 0).any():
        raise ValueError("priors must be nonnegative")
    if abs(g.sum() - 1.0) > GAMMA_TOL:
        raise ValueError(f"priors must sum to 1, got {g.sum()!r}")
    return g


def uniform_gammas(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


@dataclass(frozen=True)
class GaussianSource:
    """``Q_i = N(means[i], noise_sd^2 I)``; samples carry no labels."""

    means: np.ndarray = field(repr=False)
    noise_sd: float
    gammas: np.ndarray = field(repr=False)

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "gammas", _check_gammas(self.gammas, means.shape[0]))
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")

    @property
    def n(self) -> int:
        return self.means.shape[0]

    def sample(self, worker: int, size: int, rng: np.random.Generator) -> Batch:
        d = self.means.shape[1]
        return Batch(self.means[worker] + self.noise_sd * rng.standard_normal((size, d)))


@dataclass(frozen=True)
class ClassGaussianSource:
    """Worker ``i`` draws ``x ~ N(class_means[i], noise_sd^2 I)`` labelled ``i``."""

    class_means: np.ndarray = field(repr=False)
    noise_sd: float
    gammas: np.ndarray = field(repr=False)

    def __post_init__(self):
        cm = np.atleast_2d(np.asarray(self.class_means, dtype=float))
        object.__setattr__(self, "class_means", cm)
        object.__setattr__(self, "gammas", _check_gammas(self.gammas, cm.shape[0]))

    @property
    def n(self) -> int:
        return self.class_means.shape[0]

    def sample(self, worker: int, size: int, rng: np.random.Generator) -> Batch:
        p = self.class_means.shape[1]
        x = self.class_means[worker] + self.noise_sd * rng.standard_normal((size, p))
        return Batch(x, np.full(size, worker, dtype=np.int64))


@dataclass(frozen=True)
class ShardSource:
    """Finite per-worker datasets, sampled uniformly with replacement."""

    shards: tuple[Batch, ...] = field(repr=False)
    gammas: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "shards", tuple(self.shards))
        object.__setattr__(self, "gammas", _check_gammas(self.gammas, len(self.shards)))
        for i, s in enumerate(self.shards):
            if s.size == 0:
                raise ValueError(f"shard {i} is empty")

    @property
    def n(self) -> int:
        return len(self.shards)

    def sample(self, worker: int, size: int, rng: np.random.Generator) -> Batch:
        shard = self.shards[worker]
        idx = rng.integers(0, shard.size, size=size)
        return Batch(shard.x[idx], None if shard.y is None else shard.y[idx])


DataSource = Union[GaussianSource, ClassGaussianSource, ShardSource]


def class_means(classes: int, input_dim: int, spacing: float) -> np.ndarray:
    """Orthogonal class centres with pairwise distance ``spacing``."""
    if input_dim < classes:
        raise ValueError(f"input_dim ({input_dim}) must be at least the class count ({classes})")
    means = np.zeros((classes, input_dim))
    means[np.arange(classes), np.arange(classes)] = spacing / np.sqrt(2.0)
    return means


def synthetic_classes(
    classes: int, input_dim: int, spacing: float, noise_sd: float, per_class: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """A finite labelled Gaussian dataset with ``per_class`` points per class."""
    means = class_means(classes, input_dim, spacing)
    y = np.repeat(np.arange(classes), per_class)
    X = means[y] + noise_sd * rng.standard_normal((y.size, input_dim))
    return X, y


def partition_by_class(X: np.ndarray, y: np.ndarray, n: int, gammas=None) -> ShardSource:
    """Give worker ``i`` exactly the examples of the ``i``-th smallest label.

    Priors default to normalized shard sizes.
    """
    labels = np.unique(y)
    if labels.size != n:
        raise ClassCountMismatchError(f"{labels.size} distinct classes for {n} workers")
    shards = tuple(Batch(X[y == c], np.full(int((y == c).sum()), i, dtype=np.int64)) for i, c in enumerate(labels))
    if gammas is None:
        sizes = np.array([s.size for s in shards], dtype=float)
        gammas = sizes / sizes.sum()
    return ShardSource(shards, gammas)


# -- IDX ----------------------------------------------------------------------

_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {v.str: k for k, v in _IDX_TYPES.items()}


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def load_idx(path) -> np.ndarray:
    """Read an IDX file (optionally gzip-compressed) into an array.

    The header is ``0x00 0x00 <type> <ndim>`` followed by ``ndim`` big-endian
    uint32 dimensions.
    """
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: file shorter than the 4-byte magic")
    zero, code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or code not in _IDX_TYPES or ndim == 0:
        raise BadMagicError(f"{path}: bad IDX magic 0x{raw[:4].hex()}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: header truncated")
    shape = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = _IDX_TYPES[code]
    need = int(np.prod(shape)) * dtype.itemsize
    if len(raw) - header < need:
        raise TruncatedFileError(f"{path}: expected {need} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape)), offset=header).reshape(shape).astype(dtype.newbyteorder("="))


def write_idx(path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    be = arr.dtype.newbyteorder(">") if arr.dtype.itemsize > 1 else arr.dtype
    code = _IDX_CODES.get(np.dtype(be).str)
    if code is None:
        raise ValueError(f"dtype {arr.dtype} has no IDX type code")
    header = struct.pack(">HBB", 0, code, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.astype(be).tobytes())


def load_labeled(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Images flattened to rows and scaled to [0, 1] (for uint8 data), plus labels."""
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if labels.ndim != 1:
        raise BadMagicError(f"{labels_path}: labels must be one-dimensional")
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    X = images.reshape(images.shape[0], -1).astype(float)
    if images.dtype == np.uint8:
        X /= 255.0
    return X, labels.astype(np.int64)
