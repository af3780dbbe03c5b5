import math

import numpy as np
import pytest

from biasconsensus.errors import CapacityError, ParameterError, StructureError
from biasconsensus.graph import (
    Graph,
    build_graph,
    cheeger_bracket,
    cut_edges,
    exact_conductance,
    format_edgelist,
    generate_complete,
    generate_cycle,
    generate_random_regular,
    parse_edgelist,
    read_edgelist,
    second_eigenvalue,
    validate,
    write_edgelist,
)

from oracles import brute_conductance, brute_cut, petersen_edges, second_abs_eigenvalue


def assert_regular_simple(g):
    adj = g.dense_adjacency()
    assert np.array_equal(adj, adj.T)
    assert np.all(np.diag(adj) == 0)
    assert np.all(adj.sum(axis=1) == g.d)
    for u in range(g.n):
        nb = g.neighbors(u)
        assert len(set(nb.tolist())) == g.d
        assert np.all(np.diff(nb) > 0)
    assert (g.n * g.d) % 2 == 0


def test_complete_and_cycle_shapes():
    k4 = generate_complete(4)
    assert k4.num_edges == 6 and k4.d == 3
    c5 = generate_cycle(5)
    assert c5.num_edges == 5 and c5.d == 2
    k2 = generate_complete(2)
    assert k2.num_edges == 1 and k2.d == 1
    for g in (k4, c5, k2):
        assert_regular_simple(g)
        assert g.connected


@pytest.mark.parametrize("n", [0, 1])
def test_complete_rejects_tiny(n):
    with pytest.raises(ParameterError):
        generate_complete(n)


def test_cycle_rejects_short():
    with pytest.raises(ParameterError):
        generate_cycle(2)


def test_random_regular_n4_d3_is_k4():
    for seed in range(5):
        g = generate_random_regular(4, 3, seed)
        assert g.same_as(generate_complete(4))


def test_random_regular_parity_error():
    with pytest.raises(ParameterError, match="parity"):
        generate_random_regular(5, 3, 0)


def test_random_regular_invariants():
    g = generate_random_regular(100, 3, 7)
    assert_regular_simple(g)
    validate(g)
    assert g.num_edges == 150
    assert isinstance(g.connected, bool)


@pytest.mark.parametrize("n,d", [(50, 10), (200, 10), (64, 31)])
def test_random_regular_larger_degree(n, d):
    g = generate_random_regular(n, d, 3)
    assert_regular_simple(g)


def test_random_regular_deterministic_in_seed():
    a = generate_random_regular(60, 4, 11)
    b = generate_random_regular(60, 4, 11)
    c = generate_random_regular(60, 4, 12)
    assert a.same_as(b)
    assert not a.same_as(c)


def test_disconnected_flagged():
    two_triangles = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]
    g = Graph.from_edges(6, two_triangles)
    assert not g.connected
    with pytest.raises(StructureError):
        second_eigenvalue(g)


@pytest.mark.parametrize("edges", [
    [(0, 1), (1, 2)],           # not regular
    [(0, 0), (1, 2)],           # loop
    [(0, 1), (0, 1), (2, 3), (2, 3)],  # repeated edge
    [(0, 5)],                   # out of range
])
def test_from_edges_rejects_bad_input(edges):
    with pytest.raises(ParameterError):
        Graph.from_edges(4, edges)


def test_spectral_complete_graph():
    prof = second_eigenvalue(generate_complete(100))
    assert prof.lam == pytest.approx(1 / 99, abs=1e-6)
    assert prof.residual <= 1e-8
    assert prof.phi_lower == pytest.approx((1 - prof.lam) / 2)
    assert prof.phi_upper == pytest.approx(math.sqrt(2 * (1 - prof.lam)))


def test_spectral_odd_cycle():
    prof = second_eigenvalue(generate_cycle(101))
    assert prof.lam == pytest.approx(math.cos(math.pi / 101), abs=1e-6)


def test_spectral_even_cycle_is_bipartite():
    assert second_eigenvalue(generate_cycle(20)).lam == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("n,d,seed", [(12, 3, 1), (16, 4, 2), (30, 5, 3), (40, 6, 4)])
def test_spectral_matches_jacobi(n, d, seed):
    g = generate_random_regular(n, d, seed)
    if not g.connected:
        pytest.skip("disconnected sample")
    ref = second_abs_eigenvalue(g.dense_adjacency(), d)
    assert second_eigenvalue(g, tol=1e-12).lam == pytest.approx(ref, abs=1e-6)


def test_conductance_hand_values():
    assert exact_conductance(generate_complete(4)) == pytest.approx(2 / 3)
    assert exact_conductance(generate_cycle(6)) == pytest.approx(1 / 3)


@pytest.mark.parametrize("edges,n", [(petersen_edges(), 10), ([(i, (i + 1) % 7) for i in range(7)], 7)])
def test_conductance_brute_force(edges, n):
    g = Graph.from_edges(n, edges)
    assert exact_conductance(g) == pytest.approx(brute_conductance(n, edges))


def test_conductance_inside_cheeger_bracket():
    for seed in range(4):
        g = generate_random_regular(14, 3, seed)
        if not g.connected:
            continue
        lo, hi = cheeger_bracket(second_eigenvalue(g).lam)
        phi = exact_conductance(g)
        assert lo - 1e-9 <= phi <= hi + 1e-9


def test_conductance_capacity():
    with pytest.raises(CapacityError):
        exact_conductance(generate_cycle(23))


def test_cut_edges():
    k4 = generate_complete(4)
    assert cut_edges(k4, np.ones(4, bool)) == 0
    assert cut_edges(k4, np.array([1, 1, 0, 0], bool)) == 4
    g = generate_random_regular(20, 3, 5)
    rng = np.random.default_rng(0)
    edges = [tuple(e) for e in g.edges().tolist()]
    phi = exact_conductance(g)
    for _ in range(20):
        ones = rng.random(20) < 0.4
        cut = cut_edges(g, ones)
        assert cut == brute_cut(edges, ones)
        k = int(ones.sum())
        assert cut >= phi * g.d * min(k, 20 - k) - 1e-9


def test_edgelist_roundtrip(tmp_path):
    g = generate_random_regular(30, 4, 9)
    assert parse_edgelist(format_edgelist(g)).same_as(g)
    path = tmp_path / "g.edges"
    write_edgelist(g, path)
    assert read_edgelist(path).same_as(g)


def test_edgelist_header_mismatch():
    with pytest.raises(ParameterError):
        parse_edgelist("4 2\n0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n")


def test_build_graph_dispatch():
    assert build_graph("complete", 5).d == 4
    assert build_graph("cycle", 5).d == 2
    assert build_graph("random-regular", 10, 3, seed=1).d == 3
    with pytest.raises(ParameterError):
        build_graph("random-regular", 10)
    with pytest.raises(ParameterError):
        build_graph("star", 10)


def test_bipartite_graphs_collapse_bracket():
    # lambda is max |mu|; a bipartite graph has mu = -1, so the bracket is [0, 0]
    g = generate_cycle(6)
    lam = second_eigenvalue(g).lam
    lo, hi = cheeger_bracket(lam)
    assert lam == pytest.approx(1.0, abs=1e-6)
    assert lo == pytest.approx(0.0, abs=1e-6) and hi < 1e-2
    assert exact_conductance(g) == pytest.approx(1 / 3)
