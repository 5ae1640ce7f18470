import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdcache.catalog import ContentCatalog
from crowdcache.meanfield import (
    SMALL_ARGUMENT,
    MobilityModel,
    build_state,
    cache_fraction,
    expected_requesters,
    hit_probability,
    selection_probability,
)

# Frozen from the oracles below (mpmath at 30 digits).
P_HALF_5 = 0.9179150013761012          # 1 - exp(-2.5)
PC_HALF_5 = 0.3671660005504405         # (1 - exp(-2.5)) / 2.5
N_HALF_5_Q02 = 0.18358300027522024     # (0.5/0.5) * 0.2 * (1 - exp(-2.5))
P_04_10 = 0.9816843611112658           # 1 - exp(-4)
N_04_10 = 1.4725265416668987           # (0.6/0.4) * (1 - exp(-4))


def poisson_selection(z, terms=400):
    """sum_k 1/(k+1) * Poisson(k; z): the server-choice probability built term by term."""
    mpmath.mp.dps = 30
    z = mpmath.mpf(z)
    return float(sum(mpmath.exp(-z) * z ** k / mpmath.factorial(k) / (k + 1) for k in range(terms)))


def finite_requesters(eta, rho, U, q):
    """(U-1)(1-eta) q rho * sum_k 1/(k+1) Binomial(U-2, eta rho)(k)."""
    p = eta * rho
    n = U - 2
    lp, lq = math.log(p), math.log1p(-p)
    pc = sum(math.exp(math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1) + k * lp + (n - k) * lq) / (k + 1)
             for k in range(n + 1))
    return (U - 1) * (1 - eta) * q * rho * pc


def test_frozen_values_against_oracles():
    mpmath.mp.dps = 30
    assert float(1 - mpmath.exp(-2.5)) == pytest.approx(P_HALF_5, abs=1e-16)
    assert poisson_selection(2.5) == pytest.approx(PC_HALF_5, abs=1e-15)
    assert 0.2 * float(1 - mpmath.exp(-2.5)) == pytest.approx(N_HALF_5_Q02, abs=1e-16)
    assert float(1 - mpmath.exp(-4)) == pytest.approx(P_04_10, abs=1e-16)
    assert 1.5 * float(1 - mpmath.exp(-4)) == pytest.approx(N_04_10, abs=1e-15)


def test_mobility_model():
    m = MobilityModel(1000, 0.005)
    assert m.mean_neighbors == 1000 * 0.005
    assert MobilityModel.from_mean_neighbors(200, 4.0).encounter_probability == pytest.approx(0.02)
    for bad in [(0, 0.1), (10, -0.1), (10, 1.1)]:
        with pytest.raises(ValueError):
            MobilityModel(*bad)


def test_cache_fraction():
    assert np.all(cache_fraction(np.zeros((5, 3))) == 0)
    assert np.all(cache_fraction(np.ones((5, 3))) == 1)
    assert cache_fraction([[0.2], [0.6]])[0] == pytest.approx(0.4)
    np.testing.assert_allclose(cache_fraction([[0.2], [0.6]], counts=[3, 1]), [0.3])
    with pytest.raises(ValueError):
        cache_fraction(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        cache_fraction([[1.2]])


def test_hit_probability_examples():
    assert hit_probability(0.0, 5.0) == 0.0
    assert hit_probability(0.5, 5.0) == pytest.approx(P_HALF_5, rel=1e-15)
    assert hit_probability(1.0, 1e6) == 1.0
    with pytest.raises(ValueError):
        hit_probability(1.5, 1.0)
    with pytest.raises(ValueError):
        hit_probability(0.5, -1.0)


def test_selection_probability_examples():
    assert selection_probability(0.0, 5.0) == 1.0
    assert selection_probability(0.5, 5.0) == pytest.approx(PC_HALF_5, rel=1e-14)
    z = 1e4
    assert selection_probability(1.0, z) == pytest.approx(1.0 / z, rel=1e-12)


@pytest.mark.parametrize("z", [1e-3, 0.1, 0.7, 2.5, 9.0, 30.0])
def test_selection_probability_matches_poisson_series(z):
    assert selection_probability(1.0, z) == pytest.approx(poisson_selection(z), rel=1e-13)


def test_selection_probability_continuity():
    assert abs(selection_probability(1.0, 1e-8) - 1.0) < 1e-7
    below = selection_probability(1.0, SMALL_ARGUMENT * (1 - 1e-9))
    above = selection_probability(1.0, SMALL_ARGUMENT * (1 + 1e-9))
    assert abs(below - above) < 1e-7
    # and both sides agree with high-precision evaluation
    mpmath.mp.dps = 40
    for z in (SMALL_ARGUMENT * 0.5, SMALL_ARGUMENT * 2):
        exact = float(-mpmath.expm1(-mpmath.mpf(z)) / z)
        assert selection_probability(1.0, z) == pytest.approx(exact, rel=1e-15)


def test_expected_requesters_examples():
    assert expected_requesters(1.0, 5.0, 0.3) == 0.0
    assert expected_requesters(0.0, 5.0, 0.3) == pytest.approx(1.5, rel=1e-15)
    assert expected_requesters(1e-9, 5.0, 0.3) == pytest.approx(0.3 * 5.0, rel=1e-7)
    assert expected_requesters(0.5, 5.0, 0.2) == pytest.approx(N_HALF_5_Q02, rel=1e-14)


@pytest.mark.parametrize("eta, psi, q", [(0.3, 5.0, 0.2), (0.05, 10.0, 0.5), (0.8, 2.0, 1.0)])
def test_expected_requesters_is_large_population_limit(eta, psi, q):
    # the binomial finite-U expression approaches the closed form as U grows
    closed = expected_requesters(eta, psi, q)
    errs = [abs(finite_requesters(eta, psi / U, U, q) - closed) for U in (100, 1000, 4000)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 2e-3 * max(closed, 1e-3)


def test_build_state_examples():
    cat = ContentCatalog.uniform_sizes(4, skew=1.0)
    mob = MobilityModel.from_mean_neighbors(100, 6.0)
    st0 = build_state(np.zeros(4), mob, cat)
    np.testing.assert_array_equal(st0.hit_probability, 0.0)
    np.testing.assert_allclose(st0.expected_requesters, cat.popularity * 6.0, rtol=1e-15)
    st1 = build_state(np.ones(4), mob, cat)
    np.testing.assert_allclose(st1.hit_probability, 1 - math.exp(-6.0), rtol=1e-15)
    np.testing.assert_array_equal(st1.expected_requesters, 0.0)

    single = ContentCatalog([1.0])
    st = build_state([0.4], MobilityModel.from_mean_neighbors(1000, 10.0), single)
    assert st.hit_probability[0] == pytest.approx(P_04_10, rel=1e-14)
    assert st.expected_requesters[0] == pytest.approx(N_04_10, rel=1e-14)
    with pytest.raises(ValueError):
        build_state(np.zeros(3), mob, cat)


@settings(max_examples=300, deadline=None)
@given(eta=st.floats(0, 1), psi=st.floats(0, 50), q=st.floats(0, 1),
       d_eta=st.floats(0, 1), d_psi=st.floats(0, 10))
def test_meanfield_properties(eta, psi, q, d_eta, d_psi):
    P = hit_probability(eta, psi)
    N = expected_requesters(eta, psi, q)
    assert 0.0 <= P <= 1.0
    # monotone in both arguments
    assert hit_probability(min(1.0, eta + d_eta), psi) >= P
    assert hit_probability(eta, psi + d_psi) >= P
    # never more requesters than the eta -> 0 supremum
    assert N <= q * psi * (1 + 1e-12) + 1e-300
    # served demand equals offered D2D demand, per file
    assert eta * N == pytest.approx((1 - eta) * P * q, rel=1e-9, abs=1e-300)
    assert 0.0 < selection_probability(eta, psi) <= 1.0
