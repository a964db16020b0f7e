import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csgd.errors import (
    DimensionMismatchError,
    DuplicateEdgeError,
    EpsOutOfRangeError,
    IndexOutOfRangeError,
    NotConnectedError,
    NotSymmetricError,
    SelfLoopError,
)
from csgd.topology import (
    build_graph,
    complete,
    disagreement,
    gossip,
    gossip_round,
    is_connected,
    laplacian_matrix,
    metropolis_matrix,
    path,
    power_deviation,
    random_geometric,
    ring,
    second_eigenvalue,
    stochastic_deviation,
)
from tests.oracles import PATH3_LAMBDA2, eigen_lambda2, metropolis_loops

# -- graphs -------------------------------------------------------------------


def test_smallest_graph():
    g = build_graph(2, [(0, 1)])
    assert g.edges == ((0, 1),)


def test_triangle():
    g = build_graph(3, [(0, 1), (1, 2), (0, 2)])
    assert len(g.edges) == 3 and is_connected(g)


def test_edges_are_normalized():
    assert build_graph(3, [(2, 0), (1, 0)]).edges == ((0, 1), (0, 2))


@pytest.mark.parametrize(
    "n, edges, exc",
    [
        (3, [(0, 0)], SelfLoopError),
        (3, [(0, 3)], IndexOutOfRangeError),
        (3, [(-1, 2)], IndexOutOfRangeError),
        (3, [(0, 1), (1, 0)], DuplicateEdgeError),
        (1, [], IndexOutOfRangeError),
    ],
)
def test_build_graph_rejects(n, edges, exc):
    with pytest.raises(exc):
        build_graph(n, edges)


def test_connectivity():
    assert is_connected(complete(3))
    assert not is_connected(build_graph(4, [(0, 1), (2, 3)]))
    assert is_connected(path(3))


def test_generators():
    assert len(ring(10).edges) == 10
    assert len(ring(2).edges) == 1
    assert len(path(5).edges) == 4
    assert len(complete(5).edges) == 10
    g = random_geometric(12, 0.5, np.random.default_rng(3))
    assert is_connected(g)


def test_random_geometric_gives_up():
    with pytest.raises(NotConnectedError):
        random_geometric(20, 0.01, np.random.default_rng(0), max_tries=5)


# -- mixing -------------------------------------------------------------------


def test_metropolis_k3():
    np.testing.assert_allclose(metropolis_matrix(complete(3)).P, np.full((3, 3), 1 / 3), atol=1e-15)


def test_metropolis_path3():
    P = metropolis_matrix(path(3)).P
    expected = np.array([[2 / 3, 1 / 3, 0], [1 / 3, 1 / 3, 1 / 3], [0, 1 / 3, 2 / 3]])
    np.testing.assert_allclose(P, expected, atol=1e-15)


def test_metropolis_k2():
    np.testing.assert_array_equal(metropolis_matrix(complete(2)).P, np.full((2, 2), 0.5))


def test_metropolis_matches_loop_oracle():
    g = random_geometric(15, 0.4, np.random.default_rng(7))
    np.testing.assert_array_equal(metropolis_matrix(g).P, metropolis_loops(g.n, g.edges))


def test_metropolis_needs_connected_graph():
    with pytest.raises(NotConnectedError):
        metropolis_matrix(build_graph(4, [(0, 1), (2, 3)]))


def test_laplacian_examples():
    np.testing.assert_allclose(laplacian_matrix(complete(2), 0.5).P, np.full((2, 2), 0.5))
    np.testing.assert_allclose(laplacian_matrix(complete(3), 1 / 3).P, np.full((3, 3), 1 / 3), atol=1e-15)
    with pytest.raises(EpsOutOfRangeError):
        laplacian_matrix(path(3), 0.6)
    with pytest.raises(EpsOutOfRangeError):
        laplacian_matrix(path(3), 0.0)


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 12))
    # a random spanning tree plus extra edges keeps the graph connected
    edges = {(draw(st.integers(0, i - 1)), i) for i in range(1, n)}
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=20))
    for i, j in extra:
        if i != j:
            edges.add((min(i, j), max(i, j)))
    return build_graph(n, sorted(edges))


@settings(max_examples=60, deadline=None)
@given(connected_graphs())
def test_metropolis_invariants(g):
    P = metropolis_matrix(g).P
    assert stochastic_deviation(P) < 1e-12
    assert (P >= 0).all()
    assert np.array_equal(P, P.T)
    mask = np.ones_like(P, dtype=bool)
    np.fill_diagonal(mask, False)
    for i, j in g.edges:
        mask[i, j] = mask[j, i] = False
    assert (P[mask] == 0).all()


@settings(max_examples=40, deadline=None)
@given(connected_graphs(), st.floats(0.01, 0.99))
def test_laplacian_invariants(g, frac):
    eps = frac / g.degrees().max()
    P = laplacian_matrix(g, eps).P
    assert stochastic_deviation(P) < 1e-12 and (P >= 0).all()


# -- spectral -----------------------------------------------------------------


def test_lambda2_examples():
    assert second_eigenvalue(metropolis_matrix(complete(2))) == 0.0
    assert second_eigenvalue(metropolis_matrix(complete(3))) == pytest.approx(0.0, abs=1e-7)
    assert second_eigenvalue(metropolis_matrix(path(3))) == pytest.approx(PATH3_LAMBDA2, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(connected_graphs())
def test_lambda2_matches_eigendecomposition(g):
    P = metropolis_matrix(g).P
    lam = second_eigenvalue(P)
    assert 0.0 <= lam < 1.0
    assert lam == pytest.approx(eigen_lambda2(P), rel=1e-6, abs=1e-7)


def test_lambda2_negative_dominant_eigenvalue():
    # eigenvalues of P are 1, 0.1, 0.1, -0.8: the magnitude comes from the negative one
    P = laplacian_matrix(ring(4), 0.45).P
    assert second_eigenvalue(P) == pytest.approx(0.8, rel=1e-9)


def test_lambda2_rejects_asymmetric():
    with pytest.raises(NotSymmetricError):
        second_eigenvalue(np.array([[0.5, 0.5], [0.2, 0.8]]))


# -- gossip -------------------------------------------------------------------


def test_gossip_k2_averages():
    M = np.array([[1.0, 3.0], [5.0, -1.0]])
    out = gossip_round(M, metropolis_matrix(complete(2)))
    np.testing.assert_array_equal(out, np.array([[3.0, 1.0], [3.0, 1.0]]))


def test_gossip_fixed_point():
    M = np.tile([1.5, -2.0, 7.0], (6, 1))
    np.testing.assert_allclose(gossip(M, metropolis_matrix(ring(6)), 25), M, rtol=0, atol=1e-13)


def test_gossip_uses_transpose():
    P = np.array([[0.7, 0.3], [0.3, 0.7]])
    M = np.array([[1.0], [0.0]])
    np.testing.assert_allclose(gossip_round(M, P), P.T @ M)


def test_gossip_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        gossip_round(np.zeros((3, 2)), metropolis_matrix(ring(4)))


@pytest.mark.parametrize("graph", [complete(3), path(6), ring(10)], ids=["k3", "path6", "ring10"])
def test_gossip_contraction(graph):
    mm = metropolis_matrix(graph)
    lam = second_eigenvalue(mm)
    M = np.random.default_rng(1).standard_normal((graph.n, 4))
    spread = np.abs(M - M.mean(axis=0)).max()
    for m in range(1, 51):
        err = np.abs(gossip(M, mm, m) - M.mean(axis=0)).max()
        assert err <= lam**m * spread * graph.n + 1e-13


def test_power_deviation_decreases():
    mm = metropolis_matrix(ring(10))
    dev = [power_deviation(mm, m) for m in range(1, 60)]
    assert all(b <= a + 1e-15 for a, b in zip(dev, dev[1:]))
    assert all(b < a for a, b in zip(dev[1:], dev[2:]))


def test_disagreement():
    assert disagreement(np.ones((4, 3))) == (0.0, 0.0)
    dmax, dmean = disagreement(np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 0.0]]))
    assert dmax == 5.0 and dmean == pytest.approx(10 / 3)
