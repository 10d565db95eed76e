import json

import numpy as np
import pytest
from scipy.stats import ks_2samp

from gfflab import graphs, green, sampler


def test_exact_sampler_k4_moments(cov4):
    vals = sampler.sample_exact_batch(cov4, 100000, 7)
    emp = vals @ vals.T / vals.shape[1]
    assert np.abs(np.diag(emp) - 9 / 16).max() < 0.01
    assert abs(emp[0, 1] + 3 / 16) < 0.01
    assert np.abs(vals.sum(axis=0)).max() < 1e-8


def test_exact_sampler_rejects_indefinite():
    bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalue -1
    with pytest.raises(ValueError, match="PSD"):
        sampler.sample_exact(bad, 0)


def test_stationary_projection(mg4):
    f = np.ones(10)
    assert sampler.stationary_projection(mg4, f, 0) == 1.0
    assert sampler.stationary_projection(mg4, mg4.parity, 2) == 1.0
    mid_only = np.zeros(10)
    mid_only[4:] = 3.3
    assert sampler.stationary_projection(mg4, mid_only, 1) == 0.0
    with pytest.raises(ValueError, match="midpoint"):
        sampler.stationary_projection(mg4, f, 5)


def test_decomposition_zero_sum_every_sample(mg4):
    vals = sampler.sample_decomposition_batch(mg4, 40, 200, 3)
    assert np.abs(vals.sum(axis=0)).max() < 1e-9 * 4


def test_single_layer_covariance_matches_walk_powers(mg4):
    # layer-k covariance is (1/2)(Q^{2k}(x,y) - 1/4) on the original vertices
    q = mg4.walk.toarray()
    for k in (0, 1, 3):
        xi = sampler.sample_layer_batch(mg4, k, 100000, 11 + k)
        emp = xi @ xi.T / xi.shape[1]
        q2k = np.linalg.matrix_power(q, 2 * k)[:4, :4]
        expected = 0.5 * (q2k - 0.25)
        assert np.abs(emp - expected).max() < 0.01


def test_layer_variance_decay_bounded(mg64, g64):
    gap = graphs.spectral_gap(g64)
    for k in (5, 15, 30):
        xi = sampler.sample_layer_batch(mg64, k, 4000, k)
        assert xi.var(axis=1).max() <= 3.0 * np.exp(-gap * k)


def test_decomposition_covariance_tracks_exact(mg4, cov4):
    vals = sampler.sample_decomposition_batch(mg4, 60, 50000, 5)
    emp = vals @ vals.T / vals.shape[1]
    assert np.abs(emp - cov4).max() < 0.015


def test_zlayers_materialized_layers_are_independent_with_stated_variance(mg4):
    fields = []
    z0_var = []
    layer_var = {1: [], 4: []}
    for rep in range(400):
        f, zl = sampler.sample_decomposition(mg4, 8, 1000 + rep, store_layers=True)
        assert len(zl.layers) == 9
        z0_var.append(zl.layers[0])
        for k in layer_var:
            layer_var[k].append(zl.layers[k])
        fields.append(f.values)
    z0 = np.array(z0_var)
    assert np.abs(z0[:, :4].var(axis=0) - 0.5).max() < 0.2
    assert np.abs(z0[:, 4:].var(axis=0) - 0.75).max() < 0.3
    for k, rows in layer_var.items():
        arr = np.array(rows)
        cross = np.mean(arr * z0, axis=0)
        assert np.abs(cross).max() < 4 / np.sqrt(400)


def test_split_reconstructs_field_exactly(mg4):
    field, zl = sampler.sample_decomposition(mg4, 40, 9)
    for t in (0.0, 0.3, 0.7):
        p1, p2 = sampler.split_sprinkle(zl, t, 77)
        assert np.abs(p1.values + p2.values - field.values).max() < 1e-12
        assert p1.provenance == "split1" and p2.provenance == "split2"
    p1, p2 = sampler.split_sprinkle(zl, 0.0, 77)
    assert np.all(p2.values == 0.0)
    with pytest.raises(ValueError):
        sampler.split_sprinkle(zl, 1.0, 0)


def test_split_fresh_parts_are_independent(mg4, cov4):
    t = 0.4
    p1, p2 = sampler.sample_split_batch(mg4, 60, t, 60000, 21)
    total = p1 + p2
    emp = total @ total.T / total.shape[1]
    assert np.abs(emp - cov4).max() < 0.015
    # cross-correlations vanish
    for x in range(4):
        for y in range(4):
            c = np.corrcoef(p1[x], p2[y])[0, 1]
            assert abs(c) < 3 / np.sqrt(p1.shape[1])


def test_conditional_split_marginals(mg4):
    # re-splitting an existing sample must reproduce the fresh-split law
    t = 0.5
    part2 = []
    for rep in range(4000):
        _, zl = sampler.sample_decomposition(mg4, 30, 5000 + rep)
        _, p2 = sampler.split_sprinkle(zl, t, 9000 + rep)
        part2.append(p2.values)
    part2 = np.array(part2)
    fresh1, fresh2 = sampler.sample_split_batch(mg4, 30, t, 4000, 1)
    stat = ks_2samp(part2[:, 0], fresh2[0])
    assert stat.pvalue > 1e-3
    assert abs(part2[:, 0].var() - fresh2[0].var()) < 0.01


def test_sprinkle_field_properties(g64):
    t = 0.3
    field, z = sampler.sample_sprinkle_parts(g64, t, 13)
    assert abs(field.values.sum()) < 1e-10
    assert np.allclose(field.values, t * (z - z.mean()))
    zero = sampler.sample_sprinkle(g64, 0.0, 13)
    assert np.all(zero.values == 0.0)
    reps = np.array([sampler.sample_sprinkle(g64, t, s).values for s in range(600)])
    target = t * t * 0.5 * (1 - 1 / 64)
    assert abs(reps.var() - target) < 0.2 * target


def test_sampler_equivalence_ks(g64, mg64):
    cov = green.covariance_table(green.zero_average_green(g64))
    gap = graphs.spectral_gap(g64)
    k_max = sampler.k_max_for_bias(gap, 1e-4)
    exact = sampler.sample_exact_batch(cov, 10000, 3)
    decomp = sampler.sample_decomposition_batch(mg64, k_max, 10000, 4)
    for x in (0, 17, 63):
        assert ks_2samp(exact[x], decomp[x]).pvalue > 1e-3


def test_field_dump_format(tmp_path, mg4):
    field, _ = sampler.sample_decomposition(mg4, 12, 2)
    csv_path = tmp_path / "field.csv"
    sidecar = tmp_path / "field.json"
    sampler.dump_field(field, csv_path, sidecar)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "vertex,value"
    assert len(lines) == 5
    meta = json.loads(sidecar.read_text())
    assert meta == {"provenance": "decomposition", "seed": 2, "t": None, "k_max": 12}


def test_default_k_max_rules():
    assert sampler.default_k_max(2 / 3) == 60
    assert sampler.k_max_for_bias(0.5, 1e-3) >= 10
