import numpy as np
import pytest

from gfflab import graphs


def test_k4_is_unique_cubic_graph_on_four_vertices():
    for seed in (0, 1, 99):
        g = graphs.build_random_regular(4, 3, seed)
        expected = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
        assert np.array_equal(g.adjacency, expected)


def test_odd_parity_rejected():
    with pytest.raises(ValueError, match="odd"):
        graphs.build_random_regular(3, 3, 7)


def test_minimum_size_and_degree_guards():
    with pytest.raises(ValueError):
        graphs.build_random_regular(3, 3, 0)
    with pytest.raises(ValueError):
        graphs.build_random_regular(10, 2, 0)


def test_large_build_is_regular_and_connected():
    g = graphs.build_random_regular(10000, 3, 42)
    flat = g.adjacency.reshape(-1)
    assert g.adjacency.shape == (10000, 3)
    assert np.all(np.bincount(flat, minlength=10000) == 3)
    assert len(graphs.ball(g, 0, 10 ** 6)) == 10000  # connected


def test_determinism_of_construction():
    a = graphs.build_random_regular(500, 4, 11)
    b = graphs.build_random_regular(500, 4, 11)
    c = graphs.build_random_regular(500, 4, 12)
    assert np.array_equal(a.adjacency, b.adjacency)
    assert not np.array_equal(a.adjacency, c.adjacency)


def test_edge_array_sorted_lexicographically(g64):
    e = g64.edge_array()
    assert np.all(e[:, 0] < e[:, 1])
    keys = e[:, 0] * 64 + e[:, 1]
    assert np.all(np.diff(keys) > 0)
    assert len(e) == 96


def test_midpoint_graph_counts_and_weights(k4, mg4):
    assert mg4.n_total == 10
    assert mg4.weights.sum() == 4 * k4.n_edges
    # midpoint degree exactly 2, originals exactly d: row sums of the walk are 1
    row_sums = np.asarray(mg4.walk.sum(axis=1)).ravel()
    assert np.allclose(row_sums, 1.0)
    counts = np.diff(mg4.walk.indptr)
    assert np.all(counts[:4] == 3)
    assert np.all(counts[4:] == 2)


def test_midpoint_parity_is_alternating_eigenvector(mg4, g64):
    for mg in (mg4, graphs.midpoint_graph(g64)):
        assert np.abs(mg.walk @ mg.parity + mg.parity).max() == 0.0


def test_midpoint_id_lookup(mg4):
    assert mg4.midpoint_id(0, 1) == 4
    assert mg4.midpoint_id(3, 2) == 9
    with pytest.raises(KeyError):
        mg4.midpoint_id(0, 0)


def test_treelike_on_cycle_graph():
    n = 20
    cycle = graphs.from_edges(n, [(i, (i + 1) % n) for i in range(n)])
    for x in (0, 7):
        for r in (0, 3, 9):
            assert graphs.is_treelike(cycle, x, r)
        assert not graphs.is_treelike(cycle, x, n // 2)


def test_k4_radius_one_ball_has_cycles(k4):
    assert not graphs.is_treelike(k4, 0, 1)
    assert graphs.is_treelike(k4, 0, 0)


def test_treelike_ball_cardinality(g64):
    g = graphs.build_random_regular(10000, 3, 3)
    hits = 0
    for x in range(0, 10000, 500):
        for r in (2, 3, 4):
            if graphs.is_treelike(g, x, r):
                hits += 1
                assert len(graphs.ball(g, x, r)) == graphs.tree_ball_size(3, r)
    assert hits > 0


def test_treelike_fraction_high_at_small_radius():
    g = graphs.build_random_regular(10000, 3, 42)
    assert graphs.treelike_fraction(g, 4, sample=1500) >= 0.9
    r_n = graphs.max_treelike_radius(g, sample=1500)
    assert r_n >= 2
    assert graphs.treelike_fraction(g, r_n, sample=1500) >= 0.99


def test_spectral_gap_k4_exact(k4):
    # lazy-walk eigenvalues of K4 are {1, 1/3, 1/3, 1/3}
    assert abs(graphs.spectral_gap(k4) - 2.0 / 3.0) < 1e-12


def test_spectral_gap_lanczos_matches_dense():
    g = graphs.build_random_regular(600, 3, 2)
    dense = graphs.lazy_gap_from_dense(graphs.lazy_matrix(g).toarray())
    assert abs(graphs.spectral_gap(g) - dense) < 1e-7


def test_spectral_gap_bottleneck_graph_near_zero():
    # two 10-cliques joined by one edge; non-regular, dense oracle only
    n = 20
    adj = np.zeros((n, n))
    adj[:10, :10] = 1
    adj[10:, 10:] = 1
    np.fill_diagonal(adj, 0)
    adj[0, 10] = adj[10, 0] = 1
    deg = adj.sum(axis=1)
    transition = 0.5 * np.eye(n) + 0.5 * adj / deg[:, None]
    gap = graphs.lazy_gap_from_dense(transition, weights=deg)
    assert 0 < gap < 0.02


def test_spectral_gap_stable_across_seeds():
    gaps = [graphs.spectral_gap(graphs.build_random_regular(10000, 3, s))
            for s in (1, 2, 3)]
    assert min(gaps) > 0.015
    assert max(gaps) - min(gaps) < 0.01


def test_vertex_boundary_cases(k4, g64):
    assert graphs.vertex_boundary(k4, [0, 1, 2, 3]).size == 0
    assert np.array_equal(graphs.vertex_boundary(k4, [0]), [1, 2, 3])
    rng = np.random.default_rng(0)
    for _ in range(20):
        size = int(rng.integers(1, 32))
        a = rng.choice(64, size=size, replace=False)
        boundary = graphs.vertex_boundary(g64, a)
        assert boundary.size / size > 0.1
        assert not np.isin(boundary, a).any()


def test_sampled_expansion_positive(g64):
    assert graphs.sampled_expansion(g64, n_samples=50) > 0.05


def test_assumption_report_fields(g64):
    rep = graphs.assumption_report(g64, treelike_sample=None, expansion_samples=30)
    assert 0.0 <= rep.treelike_fraction <= 1.0
    assert rep.one_cycle_fraction >= rep.treelike_fraction
    assert 0.0 < rep.spectral_gap <= 1.0
    assert rep.min_expansion_sampled > 0.0


def test_edgelist_roundtrip(tmp_path, g64):
    path = tmp_path / "g.edges"
    graphs.save_edgelist(g64, path)
    loaded = graphs.load_edgelist(path)
    assert np.array_equal(loaded.adjacency, g64.adjacency)
    assert loaded.seed == g64.seed
    header = path.read_text().splitlines()[0]
    assert header == "# n=64 d=3 seed=42"


def test_from_edges_rejects_bad_lists():
    with pytest.raises(graphs.GraphBuildError):
        graphs.from_edges(4, [(0, 0), (1, 2), (1, 3), (2, 3), (0, 1), (0, 2)])
    with pytest.raises(graphs.GraphBuildError):
        graphs.from_edges(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)])  # disconnected
