import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from wmm import _backend
from wmm.errors import InvalidParameter, RejectionStall
from wmm.rng import RandomStream
from wmm.sampling import (Scheme, SiblingGroup, compile_plan, draw_plan, sample_beta,
                          sample_dirichlet, sample_sibling_group)
from wmm.tree import BranchEvidence

N = 100_000


def _group(*specs, latent=0):
    """``specs`` are ``(x, n, source)`` triples for children C0, C1, ..."""
    branches = [(("P", f"C{i}"), BranchEvidence(("P", f"C{i}"), x, n, src))
                for i, (x, n, src) in enumerate(specs)]
    branches += [(("P", f"L{i}"), None) for i in range(latent)]
    return SiblingGroup("P", tuple(branches))


@pytest.mark.parametrize("a,b,mean,tol", [
    (1.0, 1.0, 0.5, 0.01),
    (201.0, 801.0, 201 / 1002, 0.005),
    (888.0, 19.0, 888 / 907, 0.003),
])
def test_beta_means(a, b, mean, tol):
    x = sample_beta(a, b, RandomStream(11), N)
    assert abs(x.mean() - mean) < tol


@pytest.mark.parametrize("a,b", [(0.3, 0.7), (2.0, 5.0), (50.0, 3.0)])
def test_beta_mean_and_variance_within_three_se(a, b):
    x = sample_beta(a, b, RandomStream(5), N)
    m = a / (a + b)
    var = a * b / ((a + b) ** 2 * (a + b + 1))
    assert abs(x.mean() - m) < 3 * np.sqrt(var / N)
    # standard error of the sample variance from the fourth central moment
    m4 = np.mean((x - m) ** 4)
    assert abs(x.var() - var) < 3 * np.sqrt((m4 - var ** 2) / N)


def test_beta_rejects_bad_parameters():
    for a, b in [(0, 1), (1, -1), (np.nan, 1)]:
        with pytest.raises(InvalidParameter):
            sample_beta(a, b, RandomStream(0))


def test_beta_scalar_and_open_interval():
    v = sample_beta(1e-3, 1e-3, RandomStream(2), 10_000)
    assert np.all((v > 0) & (v < 1))
    assert isinstance(sample_beta(2, 3, RandomStream(2)), float)


@pytest.mark.parametrize("alphas,means", [
    ((1, 1, 1), (1 / 3, 1 / 3, 1 / 3)),
    ((2, 1, 1), (0.5, 0.25, 0.25)),
])
def test_dirichlet_means(alphas, means):
    x = sample_dirichlet(alphas, RandomStream(3), N)
    assert np.allclose(x.mean(axis=0), means, atol=0.01)
    assert np.max(np.abs(x.sum(axis=1) - 1.0)) < 1e-12


def test_dirichlet_rejects_bad_parameters():
    with pytest.raises(InvalidParameter):
        sample_dirichlet([1.0, 0.0], RandomStream(0))
    with pytest.raises(InvalidParameter):
        sample_dirichlet([1.0], RandomStream(0))


def test_single_branch_dir_is_beta():
    g = _group((30, 100, "s"), latent=1)
    d = sample_sibling_group(g, "dir", RandomStream(8), 10_000)[("P", "C0")]
    i = sample_sibling_group(g, "ind", RandomStream(9), 10_000)[("P", "C0")]
    ref = sample_beta(31, 71, RandomStream(10), 10_000)
    assert stats.ks_2samp(d, ref).pvalue > 0.01
    assert stats.ks_2samp(d, i).pvalue > 0.01


def _constrained_means(x1, n1, x2, n2, m=2000):
    """Means of the independent-Beta density restricted to s + t < 1, by grid quadrature."""
    g = (np.arange(m) + 0.5) / m
    s, t = np.meshgrid(g, g, indexing="ij")
    logd = (stats.beta.logpdf(s, x1 + 1, n1 - x1 + 1) + stats.beta.logpdf(t, x2 + 1, n2 - x2 + 1))
    w = np.where(s + t < 1.0, np.exp(logd - logd.max()), 0.0)
    return float((w * s).sum() / w.sum()), float((w * t).sum() / w.sum())


def test_dir_independent_surveys_match_quadrature():
    g = _group((90, 100, "s"), (5, 100, "t"), latent=1)
    draw = sample_sibling_group(g, "dir", RandomStream(21), N)
    s, t = draw[("P", "C0")], draw[("P", "C1")]
    es, et = _constrained_means(90, 100, 5, 100)
    assert abs(es - 0.894) < 0.01 and abs(et - 0.056) < 0.01
    assert abs(s.mean() - es) < 0.01 and abs(t.mean() - et) < 0.01
    assert np.all(s + t < 1.0)
    assert np.all(draw.importance_weights == 1.0)


def test_ind_independent_surveys_ignore_the_simplex():
    g = _group((90, 100, "s"), (5, 100, "t"), latent=1)
    draw = sample_sibling_group(g, "ind", RandomStream(22), N)
    s, t = draw[("P", "C0")], draw[("P", "C1")]
    assert abs(s.mean() - 91 / 102) < 0.01 and abs(t.mean() - 6 / 102) < 0.01
    assert np.mean(s + t >= 1.0) > 0


def test_shared_survey_with_latent_remainder():
    g = _group((30, 100, "s"), (50, 100, "s"), latent=1)
    draw = sample_sibling_group(g, "dir", RandomStream(4), N)
    a, b = draw[("P", "C0")], draw[("P", "C1")]
    assert np.allclose([a.mean(), b.mean()], [31 / 103, 51 / 103], atol=0.005)
    assert np.all(1.0 - a - b > 0)


def test_complete_shared_survey_has_no_remainder():
    g = _group((30, 100, "s"), (70, 100, "s"))
    draw = sample_sibling_group(g, "dir", RandomStream(4), 1000)
    assert np.allclose(draw[("P", "C0")] + draw[("P", "C1")], 1.0, atol=1e-12)
    assert abs(draw[("P", "C0")].mean() - 31 / 102) < 0.01


def test_mixed_sources_respect_the_simplex():
    g = _group((20, 100, "s"), (30, 100, "s"), (30, 80, "t"), latent=1)
    draw = sample_sibling_group(g, "dir", RandomStream(6), 20_000)
    total = sum(draw[("P", f"C{i}")] for i in range(3))
    assert np.all(total < 1.0)


def test_incompatible_surveys_stall():
    g = _group((99, 100, "s"), (98, 100, "t"))
    with pytest.raises(RejectionStall, match="'P'"):
        sample_sibling_group(g, "dir", RandomStream(1), 2)


def test_latent_branches_are_never_emitted():
    g = _group((10, 50, "s"), latent=2)
    draw = sample_sibling_group(g, "dir", RandomStream(1), 10)
    assert set(draw.probabilities) == {("P", "C0")}


def test_determinism_and_backend_agreement():
    g = _group((20, 100, "s"), (30, 100, "s"), (30, 80, "t"), latent=1)
    plan = compile_plan([g], Scheme.DIR)
    a = draw_plan(plan, 5000, 1234)
    b = draw_plan(plan, 5000, 1234)
    assert np.array_equal(a, b)
    old = _backend.set_backend("numpy")
    try:
        c = draw_plan(plan, 5000, 1234)
    finally:
        _backend.set_backend(old)
    assert np.allclose(a, c, rtol=1e-12, atol=1e-14)
    with _backend.serial_kernels():
        assert np.array_equal(draw_plan(plan, 5000, 1234), a)


def test_run_streams_do_not_depend_on_batch_size():
    g = _group((20, 100, "s"), (30, 80, "t"), latent=1)
    plan = compile_plan([g], Scheme.DIR)
    assert np.array_equal(draw_plan(plan, 100, 7), draw_plan(plan, 1000, 7)[:100])


def test_unknown_scheme():
    with pytest.raises(InvalidParameter):
        Scheme.coerce("mixed")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 40), st.booleans()), min_size=1, max_size=4),
       st.integers(0, 2**32 - 1))
def test_dir_draws_stay_on_the_simplex(branches, seed):
    # shared-survey branches split one survey of 100; the rest are separate surveys of 60
    specs, used = [], 0
    for x, shared in branches:
        if shared:
            x = min(x, 100 - used)
            used += x
            specs.append((x, 100, "shared"))
        else:
            specs.append((min(x, 10), 60, f"own{len(specs)}"))
    g = _group(*specs, latent=1)
    draw = sample_sibling_group(g, "dir", RandomStream(seed), 500)
    total = sum(draw[("P", f"C{i}")] for i in range(len(specs)))
    assert np.all(total < 1.0)
    for v in draw.probabilities.values():
        assert np.all((v > 0) & (v < 1))
