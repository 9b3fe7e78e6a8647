import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nondiss.graphs import (
    Graph,
    barabasi_albert,
    crossed_ring_graph,
    diameter,
    dirichlet_energy,
    eccentricity,
    erdos_renyi,
    graph_from_json,
    graph_to_json,
    grid_graph,
    is_connected,
    path_graph,
    ring_graph,
    shift_operator,
    sssp,
)


def undirected_pairs(g: Graph) -> set:
    return {tuple(sorted(e)) for e in g.edges.tolist()}


def floyd_warshall(g: Graph) -> np.ndarray:
    """Independent all-pairs oracle."""
    inf = float("inf")
    d = np.full((g.n, g.n), inf)
    np.fill_diagonal(d, 0.0)
    for u, v in g.edges:
        d[u, v] = 1.0
    for k in range(g.n):
        d = np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :])
    return d


class TestGenerators:
    def test_path_smallest(self):
        assert undirected_pairs(path_graph(2)) == {(0, 1)}

    def test_path_five(self):
        assert undirected_pairs(path_graph(5)) == {(0, 1), (1, 2), (2, 3), (3, 4)}

    def test_path_too_small(self):
        with pytest.raises(ValueError):
            path_graph(1)

    def test_ring_triangle(self):
        g = ring_graph(3)
        assert undirected_pairs(g) == {(0, 1), (1, 2), (0, 2)}

    def test_crossed_ring_k3_exact_edge_set(self):
        # hand enumeration of the chord index sets for k=3 (n=6), 1-indexed
        # formulas {u_i, u_{n-i+1}}, i in [2,3)  -> {u_2, u_5}   -> 0-idx (1,4)
        # {u_{n-j}, u_{3+j}}, j in [0,1)         -> {u_6, u_3}   -> 0-idx (5,2)
        ring = {(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)}
        crosses = {(1, 4), (2, 5)}
        assert undirected_pairs(crossed_ring_graph(6)) == ring | crosses

    def test_crossed_ring_rejects_odd_or_small(self):
        for n in (4, 5, 7):
            with pytest.raises(ValueError):
                crossed_ring_graph(n)

    def test_grid_2x2(self):
        g = grid_graph(2, 2)
        assert len(undirected_pairs(g)) == 4

    def test_grid_shape(self):
        g = grid_graph(3, 4)
        assert g.n == 12
        # corner degree 2, interior degree 4
        deg = g.degrees()
        assert deg[0] == 2 and deg[5] == 4

    def test_er_p0_empty(self):
        assert erdos_renyi(5, 0.0, 0).n_edges == 0

    def test_er_p1_complete(self):
        assert len(undirected_pairs(erdos_renyi(5, 1.0, 0))) == 10

    def test_ba_edge_count_against_growth_oracle(self):
        # independent re-run of the growth process with the same seed
        n, k, seed = 50, 2, 11
        g = barabasi_albert(n, k, seed)
        rng = np.random.default_rng(seed)
        pairs = set()
        deg = np.zeros(n, dtype=np.int64)
        for u in range(k):
            for v in range(u + 1, k):
                pairs.add((u, v))
                deg[u] += 1
                deg[v] += 1
        if k == 1:
            deg[0] = 1
        for u in range(k, n):
            targets = set()
            while len(targets) < k:
                w = deg[:u].astype(float)
                w /= w.sum()
                targets.add(int(rng.choice(u, p=w)))
            for v in targets:
                pairs.add((min(u, v), max(u, v)))
                deg[u] += 1
                deg[v] += 1
        assert undirected_pairs(g) == pairs
        assert len(pairs) == k * (n - k) + k * (k - 1) // 2

    @given(st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_generators_deterministic(self, seed):
        a = erdos_renyi(12, 0.3, seed)
        b = erdos_renyi(12, 0.3, seed)
        np.testing.assert_array_equal(a.edges, b.edges)
        c = barabasi_albert(12, 2, seed)
        d = barabasi_albert(12, 2, seed)
        np.testing.assert_array_equal(c.edges, d.edges)

    def test_ba_rejects_bad_k(self):
        with pytest.raises(ValueError):
            barabasi_albert(5, 5, 0)


class TestGraphInvariants:
    def test_both_orientations_present(self):
        g = ring_graph(5)
        pairs = set(map(tuple, g.edges.tolist()))
        assert all((v, u) in pairs for u, v in pairs)

    def test_no_duplicate_edges(self):
        with pytest.raises(ValueError):
            Graph(3, [(0, 1), (0, 1)])

    def test_no_self_loops(self):
        with pytest.raises(ValueError):
            Graph(3, [(1, 1)])

    def test_feature_row_count_checked(self):
        with pytest.raises(ValueError):
            Graph(3, [(0, 1), (1, 0)], x=np.zeros((2, 1)))

    def test_immutable_edges(self):
        g = ring_graph(4)
        with pytest.raises(ValueError):
            g.edges[0, 0] = 9


class TestShiftOperators:
    def test_single_edge_sym_norm(self):
        g = Graph(2, [(0, 1), (1, 0)])
        s = shift_operator(g, "sym_norm_adjacency")
        assert s[0, 1] == pytest.approx(1.0)

    def test_triangle_laplacian_hand_computed(self):
        g = ring_graph(3)
        lap = shift_operator(g, "laplacian")
        np.testing.assert_array_equal(lap, 2 * np.eye(3) - (np.ones((3, 3)) - np.eye(3)))

    def test_random_walk_rows_sum_to_one(self):
        g = erdos_renyi(10, 0.5, 3)
        s = shift_operator(g, "random_walk_adjacency")
        deg = g.degrees()
        np.testing.assert_allclose(s.sum(axis=1)[deg > 0], 1.0)

    def test_adjacency_symmetric_and_rw_antisymmetrized(self):
        g = erdos_renyi(8, 0.4, 5)
        a = shift_operator(g, "adjacency")
        np.testing.assert_array_equal(a, a.T)
        t = shift_operator(g, "random_walk_adjacency")
        s = t - t.T
        np.testing.assert_allclose(s, -s.T, atol=1e-15)

    def test_isolated_node_zero_row_policy(self):
        g = Graph(3, [(0, 1), (1, 0)])  # node 2 isolated
        s = shift_operator(g, "random_walk_adjacency")
        assert np.all(s[2] == 0.0)
        with pytest.raises(ValueError):
            shift_operator(g, "random_walk_adjacency", zero_degree="error")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            shift_operator(ring_graph(3), "nope")


class TestDistances:
    def test_path_sssp(self):
        np.testing.assert_array_equal(sssp(path_graph(3), 0), [0, 1, 2])

    def test_ring6_max_distance(self):
        assert max(sssp(ring_graph(6), 2)) == 3

    def test_crossed_ring_diameter_vs_floyd_warshall(self):
        g = crossed_ring_graph(10)
        fw = floyd_warshall(g)
        assert diameter(g) == int(fw.max())

    def test_source_out_of_range(self):
        with pytest.raises(ValueError):
            sssp(ring_graph(3), 7)

    def test_disconnected_sentinel(self):
        g = Graph(4, [(0, 1), (1, 0)])
        d = sssp(g, 0)
        assert d[2] == -1 and d[3] == -1
        assert diameter(g) == -1

    def test_all_pairs_agreement_small_graphs(self):
        rng = np.random.default_rng(0)
        for _ in range(15):
            g = erdos_renyi(int(rng.integers(4, 31)), 0.3, int(rng.integers(1000)))
            fw = floyd_warshall(g)
            for u in range(g.n):
                d = sssp(g, u)
                expect = np.where(np.isinf(fw[u]), -1, fw[u]).astype(int)
                np.testing.assert_array_equal(d, expect)
            ecc = eccentricity(g)
            if is_connected(g):
                np.testing.assert_array_equal(ecc, fw.max(axis=1).astype(int))
                assert diameter(g) == ecc.max()


class TestDirichletEnergy:
    def test_constant_state_zero(self):
        g = ring_graph(5)
        assert dirichlet_energy(np.ones((5, 3)), g) == 0.0

    def test_single_edge_hand_value(self):
        g = Graph(2, [(0, 1), (1, 0)])
        # (1/2) * (|0-1|^2 + |1-0|^2) = 1
        assert dirichlet_energy(np.array([0.0, 1.0]), g) == pytest.approx(1.0)

    def test_empty_edge_set(self):
        g = Graph(3, np.zeros((0, 2)))
        assert dirichlet_energy(np.random.default_rng(0).standard_normal((3, 2)), g) == 0.0


class TestSerialization:
    def test_round_trip(self):
        g = crossed_ring_graph(8).with_features(
            np.random.default_rng(1).standard_normal((8, 2))
        )
        g2 = graph_from_json(json.loads(json.dumps(graph_to_json(g))))
        assert g2.n == g.n and g2.undirected == g.undirected
        np.testing.assert_array_equal(g2.edges, g.edges)
        np.testing.assert_array_equal(g2.x, g.x)
