import math

import numpy as np
import pytest

from crowdcache.catalog import ContentCatalog
from crowdcache.meanfield import MobilityModel, expected_requesters, hit_probability
from crowdcache.oracle import edge_sampling, expand_profile, simulate


def test_rejects_bad_input():
    cat = ContentCatalog.uniform_sizes(2)
    mob = MobilityModel(10, 0.1)
    X = np.full((10, 2), 0.5)
    with pytest.raises(ValueError):
        simulate(X, cat, mob, trials=0)
    with pytest.raises(ValueError):
        simulate(X, cat, mob, trials=1, mode="lattice")
    with pytest.raises(ValueError):
        simulate(X[:5], cat, mob, trials=1)
    with pytest.raises(ValueError):
        simulate(np.full((10, 3), 0.5), ContentCatalog.uniform_sizes(2), mob, trials=1)


def test_expand_profile():
    X = expand_profile([[0.1, 0.2], [0.3, 0.4]], counts=[2, 1])
    np.testing.assert_array_equal(X, [[0.1, 0.2], [0.1, 0.2], [0.3, 0.4]])


@pytest.mark.parametrize("mode", ["counts", "graph"])
def test_no_encounters(mode):
    cat = ContentCatalog.uniform_sizes(4, skew=1.0)
    out = simulate(np.full((50, 4), 0.3), cat, MobilityModel(50, 0.0), trials=20, seed=3, mode=mode)
    np.testing.assert_array_equal(out.empirical_hit, 0.0)
    assert out.empirical_loads["d2d_in"] == 0.0
    np.testing.assert_array_equal(out.requests[:, 1], 0)


@pytest.mark.parametrize("mode", ["counts", "graph"])
def test_everyone_caches_everything(mode):
    cat = ContentCatalog.uniform_sizes(3, skew=1.0)
    out = simulate(np.ones((40, 3)), cat, MobilityModel(40, 0.2), trials=10, seed=1, mode=mode)
    np.testing.assert_array_equal(out.empirical_requesters, 0.0)
    assert out.empirical_loads["local"] == pytest.approx(1.0)
    np.testing.assert_array_equal(out.requests[:, 0], 40)


def test_single_file_hit_probability():
    cat = ContentCatalog([1.0])
    mob = MobilityModel.from_mean_neighbors(1000, 5.0)
    out = simulate(np.full((1, 1), 0.5), cat, mob, trials=200, seed=11, counts=[1000])
    n = out.hit_samples[0]
    assert n > 9e4
    p = 1 - math.exp(-2.5)
    se = math.sqrt(p * (1 - p) / n)
    assert abs(out.empirical_hit[0] - p) <= 3 * se


def test_edge_sampling_limits():
    full = edge_sampling(30, 1.0, 0)
    assert full.sum() == 30 * 29 and not full.diagonal().any()
    assert edge_sampling(30, 0.0, 0).sum() == 0
    a = edge_sampling(30, 0.4, 5)
    np.testing.assert_array_equal(a, a.T)
    np.testing.assert_array_equal(a, edge_sampling(30, 0.4, 5))


def test_mean_degree():
    U, rho = 400, 0.02
    degs = np.concatenate([edge_sampling(U, rho, s).sum(axis=1) for s in range(20)])
    expect = (U - 1) * rho
    se = math.sqrt(expect * (1 - rho) / degs.size)
    assert abs(degs.mean() - expect) <= 4 * se
    # the mean-field convention counts U rather than U - 1 neighbours
    assert abs(U * rho - expect) == pytest.approx(rho)


def test_deterministic_and_conserving(rng):
    cat = ContentCatalog.uniform_sizes(5, skew=0.7)
    X = rng.uniform(0, 1, (200, 5))
    mob = MobilityModel(200, 0.02)
    a = simulate(X, cat, mob, trials=30, seed=42)
    b = simulate(X, cat, mob, trials=30, seed=42)
    np.testing.assert_array_equal(a.empirical_hit, b.empirical_hit)
    np.testing.assert_array_equal(a.empirical_requesters, b.empirical_requesters)
    np.testing.assert_array_equal(a.requests, b.requests)
    assert a.empirical_loads == b.empirical_loads
    assert np.all(a.requests.sum(axis=1) == 200)
    c = simulate(X, cat, mob, trials=30, seed=43)
    assert not np.array_equal(a.requests, c.requests)
    for v in a.empirical_hit:
        assert 0 <= v <= 1


def test_independent_of_worker_count(rng):
    cat = ContentCatalog.uniform_sizes(4, skew=1.0)
    X = rng.uniform(0, 1, (100, 4))
    mob = MobilityModel(100, 0.05)
    a = simulate(X, cat, mob, trials=12, seed=9, workers=1)
    b = simulate(X, cat, mob, trials=12, seed=9, workers=3)
    np.testing.assert_array_equal(a.requests, b.requests)
    np.testing.assert_array_equal(a.empirical_requesters, b.empirical_requesters)


def test_storage_exceedance_diagnostic():
    cat = ContentCatalog.uniform_sizes(4)
    mob = MobilityModel(100, 0.05)
    out = simulate(np.full((100, 4), 0.75), cat, mob, trials=5, seed=0, capacity=3.0)
    # exceeding 3 needs all four files: 0.75^4
    assert out.storage_exceedance == pytest.approx(0.75 ** 4, abs=0.05)
    assert math.isnan(simulate(np.full((100, 4), 0.75), cat, mob, trials=2).storage_exceedance)


def test_graph_mode_agrees_with_counts_mode():
    cat = ContentCatalog.uniform_sizes(3, skew=1.0)
    eta = np.array([0.6, 0.3, 0.1])
    mob = MobilityModel.from_mean_neighbors(300, 4.0)
    a = simulate(eta[None, :], cat, mob, trials=60, seed=1, counts=[300], mode="counts")
    b = simulate(eta[None, :], cat, mob, trials=60, seed=2, counts=[300], mode="graph")
    se = np.sqrt(a.hit_se ** 2 + b.hit_se ** 2)
    assert np.all(np.abs(a.empirical_hit - b.empirical_hit) <= 4 * se + 1e-12)
    se_n = np.sqrt(a.requesters_se ** 2 + b.requesters_se ** 2)
    assert np.all(np.abs(a.empirical_requesters - b.empirical_requesters) <= 4 * se_n + 1e-12)


def test_close_to_closed_forms_at_moderate_population():
    cat = ContentCatalog.uniform_sizes(4, skew=0.8)
    eta = np.array([0.5, 0.3, 0.2, 0.05])
    psi = 5.0
    out = simulate(eta[None, :], cat, MobilityModel.from_mean_neighbors(1000, psi), trials=100,
                   seed=5, counts=[1000])
    P = hit_probability(eta, psi)
    N = expected_requesters(eta, psi, cat.popularity)
    assert np.all(np.abs(out.empirical_hit - P) <= np.maximum(0.01, 4 * out.hit_se))
    assert np.all(np.abs(out.empirical_requesters - N) <= np.maximum(0.01, 4 * out.requesters_se))
