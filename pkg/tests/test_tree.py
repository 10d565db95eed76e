import math

import numpy as np
import pytest

from gfflab import tree
from gfflab.rng import stream

NEG_INF = float("-inf")


def test_structure_counts_and_parents():
    st = tree.tree_structure(3, 4)
    assert st.n_vertices == 3 * 2 ** 4 - 2
    assert st.n_children[0] == 3
    assert np.all(st.n_children[1: st.level_slice(4).start] == 2)
    assert np.all(st.n_children[st.level_slice(4)] == 0)
    for v in range(1, st.n_vertices):
        kids = st.children_of(st.parent[v])
        assert v in kids
    # children ranges are contiguous and BFS-ordered
    assert np.array_equal(st.children_of(0), [1, 2, 3])
    assert np.array_equal(st.children_of(1), [4, 5])


def brute_root_component(st, eligible, max_level):
    # oracle: BFS over explicit adjacency of the truncated tree
    if not eligible[0]:
        return set()
    adj = {v: [] for v in range(st.n_vertices)}
    for v in range(1, st.n_vertices):
        adj[v].append(int(st.parent[v]))
        adj[int(st.parent[v])].append(v)
    comp = {0}
    frontier = [0]
    while frontier:
        nxt = []
        for v in frontier:
            for w in adj[v]:
                if w not in comp and eligible[w] and st.level[w] <= max_level:
                    comp.add(w)
                    nxt.append(w)
        frontier = nxt
    return comp


def test_marginal_moments_match_tree_green():
    st = tree.tree_structure(3, 4)
    rng = stream(0, "test", 0)
    phi, _ = tree._phi_batch(st, 30000, rng)
    sig = 3.0 / math.sqrt(30000)
    assert abs(phi[0].var() - tree.tree_green(3, 0)) < 3 * sig
    # covariance at distances 1..4 from the root line
    chain = [0, 1, 4, 10]
    for i, v in enumerate(chain[1:], start=1):
        emp = np.mean(phi[0] * phi[v])
        assert abs(emp - tree.tree_green(3, i)) < 3 * sig
    # stationarity of the per-level variance
    for lvl in range(5):
        sl = st.level_slice(lvl)
        assert abs(phi[sl].var() - 2.0) < 0.05


def test_sample_tree_recursion_identity():
    ts = tree.sample_tree(3, 5, 123)
    st = ts.structure
    for v in range(1, st.n_vertices):
        expected = ts.phi[st.parent[v]] / 2 + ts.increments[v]
        assert abs(ts.phi[v] - expected) < 1e-12


def test_robust_component_matches_bfs_oracle():
    for seed in range(5):
        ts = tree.sample_tree(3, 6, seed)
        ids, counts = tree.robust_component(ts, 0.1, 0.8, -1.5, seed_iota=seed)
        st = ts.structure
        child_sum = np.zeros(st.n_vertices)
        np.add.at(child_sum, st.parent[1:], ts.phi[1:])
        eligible = (ts.phi >= 0.1) & ts.iota & (child_sum >= -1.5)
        oracle = brute_root_component(st, eligible, st.depth - 1)
        assert set(ids.tolist()) == oracle
        assert counts.sum() == len(oracle)


def test_robust_component_trivial_cases():
    ts = tree.sample_tree(3, 6, 1)
    ids, _ = tree.robust_component(ts, 1e6, 1.0, NEG_INF, 0)
    assert ids.size == 0
    ids, _ = tree.robust_component(ts, -1e6, 0.0, NEG_INF, 0)
    assert ids.size == 0
    # p=1, gamma=-inf reduces to the plain level-set component
    ids, counts = tree.robust_component(ts, 0.0, 1.0, NEG_INF, 0)
    st = ts.structure
    oracle = brute_root_component(st, ts.phi >= 0.0, st.depth - 1)
    assert set(ids.tolist()) == oracle


def test_component_nesting_on_shared_randomness():
    ts = tree.sample_tree(3, 7, 3)
    loose, _ = tree.robust_component(ts, -0.2, 0.9, -3.0, seed_iota=5)
    tight, _ = tree.robust_component(ts, 0.1, 0.7, -1.0, seed_iota=5)
    assert set(tight.tolist()) <= set(loose.tolist())


def test_estimate_eta_subcritical_dies():
    est = tree.estimate_eta(3, 2.0, 1.0, NEG_INF, 12, 4000, 3)
    assert est.survival_fraction < 0.01


def test_estimate_eta_supercritical_stable_across_depths():
    vals = [tree.estimate_eta(3, 0.0, 1.0, NEG_INF, depth, 20000, 7)
            for depth in (10, 15, 20)]
    fracs = [v.survival_fraction for v in vals]
    assert fracs[0] > fracs[1] > fracs[2] > 0.3  # decreasing to a positive limit
    assert fracs[0] - fracs[2] < 0.05


def test_estimate_eta_monotone_in_parameters():
    base = tree.estimate_eta(3, 0.2, 0.9, -1.0, 12, 20000, 11)
    better = tree.estimate_eta(3, 0.1, 0.95, -2.0, 12, 20000, 11)
    assert better.survival_fraction >= base.survival_fraction - 2 * base.ci_halfwidth


def test_estimate_eta_guards():
    with pytest.raises(ValueError):
        tree.estimate_eta(3, 0.0, 1.0, NEG_INF, 3, 100, 0)
    with pytest.raises(ValueError):
        tree.estimate_eta(3, 0.0, 1.0, NEG_INF, 10, 0, 0)


def test_front_growth_rate_matches_eigenvalue():
    from gfflab.operator import principal_eigenvalue
    lam = principal_eigenvalue(3, 0.0)
    depth = 12
    est = tree.estimate_eta(3, 0.0, 1.0, NEG_INF, depth, 30000, 13, keep_counts=True)
    k = depth - 1
    hits = (est.level_counts[:, k] >= lam ** k / k ** 2).mean()
    assert abs(hits - est.survival_fraction) < 0.1


def test_prune_identity_at_zero():
    ts = tree.sample_tree(3, 6, 5)
    tree.prune_field(ts, 0.0, 1)
    n1 = len(ts.phi1)
    assert ts.pruned_depth == 5
    assert np.array_equal(ts.phi1, ts.phi[:n1])
    assert np.all(ts.phi2 == 0.0)


def test_prune_guard_rejects_large_t():
    ts = tree.sample_tree(3, 6, 5)
    with pytest.raises(ValueError):
        tree.prune_field(ts, 0.9, 1)


def test_prune_conditional_moments():
    st = tree.tree_structure(3, 7)
    rng = stream(2, "test", 0)
    t = 0.4
    phi, _ = tree._phi_batch(st, 20000, rng)
    phi1, phi2 = tree._prune_batch(st, phi, t, rng, 6)
    n1 = phi2.shape[0]
    # regression of the sprinkle on (field - neighbor mean) recovers t^2/2
    nb = tree._neighbor_sum(st, phi, 6)[:n1]
    u = phi[:n1] - nb / 3.0
    slope = float((u * phi2).sum() / (u * u).sum())
    assert abs(slope - t * t / 2) < 0.02 * (t * t / 2) + 3e-4
    # joint covariances: Cov(phi2, phi2) and Cov(phi2, phi) are both
    # (t^2/2) * identity
    reps = phi.shape[1]
    sig = 3.0 / math.sqrt(reps)
    for v, w in ((0, 0), (1, 1), (0, 1), (1, 4), (2, 3)):
        expected = t * t / 2 if v == w else 0.0
        assert abs(np.mean(phi2[v] * phi2[w]) - expected) < sig
        assert abs(np.mean(phi2[v] * phi[w]) - expected) < sig
    # residual of the conditional mean is uncorrelated with the field
    psi = phi2 - (t * t / 2) * u
    target_var = t * t / 2 - t ** 4 / 4
    assert abs(psi.var() - target_var) < 0.02 * target_var
    for v, w in ((0, 0), (1, 2), (3, 9)):
        corr = np.corrcoef(psi[v], phi[w])[0, 1]
        assert abs(corr) < 3 / math.sqrt(reps)


def test_pruned_component_contained_in_robust():
    for seed in range(4):
        ts = tree.sample_tree(3, 7, seed)
        tree.prune_field(ts, 0.3, seed + 50)
        pruned, _ = tree.pruned_component(ts, 0.0, 0.9, seed_iota=7)
        robust, _ = tree.robust_component(ts, 0.0, 0.9, NEG_INF, seed_iota=7)
        assert set(pruned.tolist()) <= set(robust.tolist())


def test_pruned_component_trivial_reduction():
    ts = tree.sample_tree(3, 7, 9)
    tree.prune_field(ts, 0.0, 1)
    ids, _ = tree.pruned_component(ts, 0.0, 1.0, 3)
    oracle = brute_root_component(ts.structure, ts.phi >= 0.0, ts.pruned_depth)
    assert set(ids.tolist()) == oracle
    fresh = tree.sample_tree(3, 7, 9)
    with pytest.raises(ValueError):
        tree.pruned_component(fresh, 0.0, 1.0, 3)


def test_pruned_front_trend_toward_unpruned_survival():
    freqs = tree.pruned_front_frequencies(3, 0.0, 0.95, [0.2, 0.1, 0.05], 12, 3000, 17)
    eta = tree.estimate_eta(3, 0.0, 0.95, NEG_INF, 13, 30000, 17).survival_fraction
    assert freqs[0.05] >= freqs[0.2] - 0.03
    assert abs(freqs[0.05] - eta) < 0.15
