import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from oracles import hidden_posterior_quadrature, simple_posterior_quadrature
from wmm import _backend
from wmm.bayes import (HiddenHyper, PosteriorGrid, PriorSpec, log_beta_binomial,
                       posterior_hidden, posterior_moments, posterior_point_mass_q,
                       posterior_sample, posterior_simple, total_variation)
from wmm.errors import EmptySupport, InvalidParameter
from wmm.rng import RandomStream

HYPER = HiddenHyper(13, 39, 41, 11, 30, 20, 2, 5)


def _check_grid(g):
    assert np.all(np.diff(g.z_values) == 1)
    assert abs(g.pmf.sum() - 1.0) < 1e-12
    assert np.all(np.isfinite(g.log_pmf))


def test_prior_parsing_and_errors():
    assert PriorSpec.parse("uniform:1,5") == PriorSpec.uniform(1, 5)
    assert PriorSpec.parse("gauss:10,2").kind == "gaussian"
    for bad in ("uniform:5,1", "gauss:1,0", "beta:1,2", "uniform:1"):
        with pytest.raises(InvalidParameter):
            PriorSpec.parse(bad)
    assert list(PriorSpec.uniform(3.5, 6.2).grid(0)) == [4, 5, 6]
    assert PriorSpec.uniform(0, 100, support=(10, 20)).grid(15)[0] == 15


def test_empty_support():
    with pytest.raises(EmptySupport):
        posterior_simple(750, 200, 1, 1, 1, 1, PriorSpec.uniform(100, 900))
    with pytest.raises(EmptySupport):
        PriorSpec.gaussian(100, 1).grid(500)


def test_beta_binomial_matches_scipy():
    k = np.arange(0, 31)
    assert np.allclose(log_beta_binomial(k, 30, 2.5, 4.0), stats.betabinom.logpmf(k, 30, 2.5, 4.0))
    assert np.array_equal(log_beta_binomial(k, 30, 1.0, 1.0), np.full(31, -np.log(31.0)))


def test_flat_q_posterior_ignores_b():
    prior = PriorSpec.uniform(1000, 1250)
    ref = posterior_simple(750, 0, 26, 76, 1, 1, prior)
    for b in (1, 120, 250):
        g = posterior_simple(750, b, 26, 76, 1, 1, prior)
        assert np.array_equal(g.z_values, ref.z_values)
        assert total_variation(g, ref) < 1e-12


@pytest.mark.parametrize("a,b,hyper,prior", [
    (750, 200, (26, 76, 81, 21), PriorSpec.uniform(750, 1250)),
    (750, 200, (26, 76, 81, 21), PriorSpec.uniform(0, 10000)),
    (30, 8, (3, 9, 5, 2), PriorSpec.uniform(0, 400)),
    (1500, 400, (26, 76, 81, 21), PriorSpec.gaussian(2000, 150)),
])
def test_simple_posterior_matches_quadrature(a, b, hyper, prior):
    g = posterior_simple(a, b, *hyper, prior)
    _check_grid(g)
    oracle = simple_posterior_quadrature(a, b, *hyper, g.z_values,
                                         log_prior=prior.log_density(g.z_values))
    assert 0.5 * np.abs(oracle - g.pmf).sum() < 1e-3
    assert abs(posterior_moments(g).mean - float(oracle @ g.z_values)) < 3


def test_point_mass_prior_gives_single_row():
    g = posterior_simple(750, 200, 26, 76, 81, 21, PriorSpec.gaussian(1000, 1e-6))
    assert list(g.z_values) == [1000] and g.pmf[0] == 1.0


def test_concentrated_q_prior_approaches_point_mass():
    prior = PriorSpec.uniform(950, 1300)
    q = 0.8
    limit = posterior_point_mass_q(750, 200, 26, 76, q, prior)
    tvs = [total_variation(posterior_simple(750, 200, 26, 76, q * k, (1 - q) * k, prior), limit)
           for k in (1e2, 1e3, 1e4)]
    assert tvs[0] > tvs[1] > tvs[2]
    assert tvs[2] < 0.01


def test_large_z_stays_finite():
    g = posterior_simple(500_000, 100_000, 26, 76, 81, 21, PriorSpec.uniform(600_000, 1_000_000))
    _check_grid(g)
    assert g.z_values[-1] <= 1_000_000


def test_hidden_exact_matches_quadrature():
    g = posterior_hidden(20, 45, 30, HYPER, PriorSpec.uniform(60, 259), method="exact")
    oracle = hidden_posterior_quadrature(20, 45, 30, HYPER, g.z_values, m=40)
    assert 0.5 * np.abs(oracle - g.pmf).sum() < 0.01


def test_hidden_reduces_to_simple_when_s_vanishes():
    prior = PriorSpec.uniform(750, 1250)
    h = HiddenHyper(26, 76, 81, 21, 5, 5, 1, 1e6)
    hidden = posterior_hidden(200, 450, 300, h, prior, method="exact")
    simple = posterior_simple(750, 200, 26, 76, 81, 21, prior)
    assert total_variation(hidden, simple) < 0.01


def test_hidden_zero_counts_are_decreasing():
    g = posterior_hidden(0, 0, 0, HYPER, PriorSpec.uniform(0, 60), method="exact")
    assert g.z_values[0] == 0
    assert np.all(np.diff(g.log_pmf) < 0)
    mc = posterior_hidden(0, 0, 0, HYPER, PriorSpec.uniform(0, 60), mc_samples=20_000,
                          rng=RandomStream(1))
    assert total_variation(mc, g) < 0.01


def test_hidden_mc_accuracy_and_backends():
    prior = PriorSpec.uniform(900, 1150)
    exact = posterior_hidden(200, 450, 300, HYPER, prior, method="exact")
    mc = posterior_hidden(200, 450, 300, HYPER, prior, mc_samples=100_000, rng=RandomStream(2))
    assert np.nanmax(mc.mc_stderr) < 0.02
    assert total_variation(mc, exact) < 0.005
    small = dict(mc_samples=20_000, rng=RandomStream(3))
    a = posterior_hidden(200, 450, 300, HYPER, prior, **small)
    old = _backend.set_backend("numpy")
    try:
        b = posterior_hidden(200, 450, 300, HYPER, prior, mc_samples=20_000, rng=RandomStream(3))
    finally:
        _backend.set_backend(old)
    assert np.allclose(a.log_pmf, b.log_pmf, atol=1e-9)


def test_hidden_rejects_bad_arguments():
    prior = PriorSpec.uniform(0, 100)
    with pytest.raises(InvalidParameter):
        posterior_hidden(1, 1, 1, HYPER, prior, mc_samples=5000)
    with pytest.raises(InvalidParameter):
        posterior_hidden(1, 1, 1, HYPER, prior, mc_samples=10_001)
    with pytest.raises(InvalidParameter):
        posterior_hidden(-1, 1, 1, HYPER, prior, method="exact")
    with pytest.raises(InvalidParameter):
        HiddenHyper.from_sequence([1] * 7)


def test_moments_of_a_two_point_grid():
    g = PosteriorGrid(np.array([10, 11]), np.log([0.5, 0.5]))
    m = posterior_moments(g)
    assert m.mean == 10.5 and m.sd == 0.5
    assert m.mean_log == pytest.approx(0.5 * (np.log(10) + np.log(11)))
    assert m.quantile(0.5) == 10 and m.quantile(0.51) == 11
    with pytest.raises(ValueError):
        m.quantile(1.5)


def test_posterior_sample_frequencies():
    point = PosteriorGrid(np.array([42]), np.array([0.0]))
    assert posterior_sample(point, RandomStream(0)) == 42
    z = np.arange(100, 110)
    g = PosteriorGrid(z, np.full(10, -np.log(10)))
    draws = posterior_sample(g, RandomStream(1), 50_000)
    counts = np.bincount(draws - 100, minlength=10)
    assert stats.chisquare(counts).pvalue > 0.001


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 400), st.integers(0, 200), st.floats(0.5, 50), st.floats(0.5, 50),
       st.floats(0.5, 50), st.floats(0.5, 50))
def test_simple_posterior_is_a_pmf_above_the_observed_total(a, b, ap, bp, aq, bq):
    g = posterior_simple(a, b, ap, bp, aq, bq, PriorSpec.uniform(0, 5000))
    _check_grid(g)
    assert g.z_values[0] >= a + b
