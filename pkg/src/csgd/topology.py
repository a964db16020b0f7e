"""Worker graphs, doubly stochastic mixing matrices and gossip averaging."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    DuplicateEdgeError,
    EpsOutOfRangeError,
    IndexOutOfRangeError,
    NoConvergenceError,
    NotConnectedError,
    NotSymmetricError,
    SelfLoopError,
)

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on vertices ``0..n-1``.

    Edges are stored as sorted ``(i, j)`` tuples with ``i < j``.
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def laplacian(self) -> np.ndarray:
        L = np.diag(self.degrees().astype(float))
        for i, j in self.edges:
            L[i, j] = L[j, i] = -1.0
        return L


@dataclass(frozen=True)
class MixingMatrix:
    """Dense doubly stochastic weights ``P`` respecting the sparsity of ``graph``."""

    P: np.ndarray = field(repr=False)
    graph: Graph

    @property
    def n(self) -> int:
        return self.graph.n

    def power(self, m: int) -> np.ndarray:
        return np.linalg.matrix_power(self.P, m)


def build_graph(n: int, edges: Iterable[Sequence[int]]) -> Graph:
    """Validate an edge list and return a :class:`Graph`.

    Raises IndexOutOfRangeError, SelfLoopError or DuplicateEdgeError.
    """
    if n < 2:
        raise IndexOutOfRangeError(f"a graph needs at least 2 workers, got n={n}")
    seen: set[tuple[int, int]] = set()
    out = []
    for e in edges:
        if len(e) != 2:
            raise ValueError(f"edge must be a pair, got {e!r}")
        i, j = int(e[0]), int(e[1])
        if not (0 <= i < n and 0 <= j < n):
            raise IndexOutOfRangeError(f"edge ({i}, {j}) has a vertex outside [0, {n})")
        if i == j:
            raise SelfLoopError(f"self-loop at vertex {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise DuplicateEdgeError(f"duplicate edge {key}")
        seen.add(key)
        out.append(key)
    return Graph(n, tuple(sorted(out)))


def is_connected(g: Graph) -> bool:
    adj = g.neighbors()
    seen = [False] * g.n
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return all(seen)


# -- generators ---------------------------------------------------------------


def ring(n: int) -> Graph:
    if n == 2:
        return build_graph(2, [(0, 1)])
    return build_graph(n, [(i, (i + 1) % n) for i in range(n)])


def path(n: int) -> Graph:
    return build_graph(n, [(i, i + 1) for i in range(n - 1)])


def complete(n: int) -> Graph:
    return build_graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def random_geometric(n: int, radius: float, rng: np.random.Generator, max_tries: int = 1000) -> Graph:
    """Unit-square random geometric graph, redrawn until connected."""
    for _ in range(max_tries):
        pts = rng.random((n, 2))
        dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if dist[i, j] <= radius]
        g = build_graph(n, edges)
        if is_connected(g):
            return g
    raise NotConnectedError(
        f"no connected geometric graph with n={n}, radius={radius} after {max_tries} draws"
    )


# -- mixing matrices ----------------------------------------------------------


def metropolis_matrix(g: Graph) -> MixingMatrix:
    """Metropolis-Hastings weights ``P_ij = 1 / (1 + max(deg_i, deg_j))``."""
    if not is_connected(g):
        raise NotConnectedError("Metropolis weights need a connected graph")
    deg = g.degrees()
    P = np.zeros((g.n, g.n))
    for i, j in g.edges:
        P[i, j] = P[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    # off-diagonals are assigned in pairs, so P is bit-symmetric
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return _checked(MixingMatrix(P, g))


def laplacian_matrix(g: Graph, eps: float) -> MixingMatrix:
    """``P = I - eps * L`` with ``0 < eps < 1/deg_max``."""
    if not is_connected(g):
        raise NotConnectedError("Laplacian mixing needs a connected graph")
    dmax = int(g.degrees().max())
    if not (0.0 < eps < 1.0 / dmax):
        raise EpsOutOfRangeError(f"eps={eps} must lie in (0, 1/{dmax})")
    P = np.eye(g.n) - eps * g.laplacian()
    return _checked(MixingMatrix(P, g))


def stochastic_deviation(P: np.ndarray) -> float:
    """Largest absolute row- or column-sum deviation from 1."""
    return float(max(np.abs(P.sum(axis=0) - 1.0).max(), np.abs(P.sum(axis=1) - 1.0).max()))


def _checked(mm: MixingMatrix) -> MixingMatrix:
    P = mm.P
    if (P < 0).any():
        raise ValueError("mixing matrix has negative entries")
    if stochastic_deviation(P) >= STOCHASTIC_TOL:
        raise ValueError("mixing matrix is not doubly stochastic")
    allowed = np.eye(mm.n, dtype=bool)
    for i, j in mm.graph.edges:
        allowed[i, j] = allowed[j, i] = True
    if (P[~allowed] != 0).any():
        raise ValueError("mixing matrix has weight on a non-edge")
    return mm


def second_eigenvalue(p: MixingMatrix | np.ndarray, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Magnitude of the largest eigenvalue of ``P - J/n``.

    Power iteration is run on the square of the deflated matrix, which is
    positive semidefinite, so eigenvalue pairs ``+l, -l`` cannot stall it.
    Stops once the residual ``|A x - theta x|`` drops below ``tol * theta``.
    """
    P = p.P if isinstance(p, MixingMatrix) else np.asarray(p, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n):
        raise DimensionMismatchError(f"expected a square matrix, got {P.shape}")
    if not np.allclose(P, P.T, rtol=0.0, atol=1e-14):
        raise NotSymmetricError("second_eigenvalue requires a symmetric matrix")
    A = P - np.full((n, n), 1.0 / n)
    A2 = A @ A
    scale = np.abs(A2).max()
    if scale <= 1e-30:
        return 0.0

    # fixed start: deterministic and almost surely not orthogonal to the target
    x = np.cos(np.arange(1, n + 1) * 1.2345) + 0.1
    x -= x.mean()
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        y = A2 @ x
        theta = float(x @ y)
        norm_y = np.linalg.norm(y)
        if norm_y <= 1e-300 or theta <= scale * 1e-28:
            return 0.0
        if np.linalg.norm(y - theta * x) <= tol * theta:
            return float(np.sqrt(theta))
        x = y / norm_y
    raise NoConvergenceError(f"power iteration did not converge in {max_iter} steps")


# -- gossip -------------------------------------------------------------------


def gossip_round(messages: np.ndarray, p: MixingMatrix | np.ndarray) -> np.ndarray:
    """One consensus round over ``n x d`` row messages.

    Row ``j`` of the result is ``sum_i P_ij * messages[i]``, i.e. ``P^T M``,
    which is the row-major view of right-multiplying the column matrix by P.
    """
    P = p.P if isinstance(p, MixingMatrix) else np.asarray(p)
    M = np.asarray(messages, dtype=float)
    if M.ndim != 2 or M.shape[0] != P.shape[0]:
        raise DimensionMismatchError(
            f"messages have shape {M.shape}, mixing matrix is {P.shape[0]}x{P.shape[0]}"
        )
    return P.T @ M


def gossip(messages: np.ndarray, p: MixingMatrix | np.ndarray, rounds: int) -> np.ndarray:
    M = np.asarray(messages, dtype=float)
    for _ in range(rounds):
        M = gossip_round(M, p)
    return M


def power_deviation(p: MixingMatrix, m: int) -> float:
    """``max_ij |[P^m]_ij - 1/n|``."""
    return float(np.abs(p.power(m) - 1.0 / p.n).max())


def disagreement(W: np.ndarray) -> tuple[float, float]:
    """Max and mean pairwise Euclidean distance between rows of ``W``."""
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    if n < 2:
        return 0.0, 0.0
    diff = W[:, None, :] - W[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    iu = np.triu_indices(n, k=1)
    pairs = dist[iu]
    return float(pairs.max()), float(pairs.mean())
