import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from oracles import estep_quadrature
from conftest import toy_model, TOY_POINTS
from skewfa.distributions import CFUSTParams, cfust_logpdf
from skewfa.exceptions import DomainError
from skewfa.model import (
    ComponentParams,
    Dataset,
    Family,
    MixtureModel,
    count_params,
    model_logpdf,
    observed_scale,
    sample_mixture,
)


def comp(pi=1.0, p=3, q=2, r=1, seed=0, nu=6.0):
    rng = np.random.default_rng(seed)
    return ComponentParams(pi, rng.normal(size=p), rng.normal(size=(p, q)), rng.normal(size=(q, r)), rng.uniform(0.2, 1, p), nu)


def test_observed_scale_zero_loadings():
    c = ComponentParams(1.0, np.zeros(3), np.zeros((3, 2)), np.ones((2, 1)), np.ones(3))
    S, D = observed_scale(c)
    np.testing.assert_array_equal(S, np.eye(3))
    np.testing.assert_array_equal(D, np.zeros((3, 1)))


def test_observed_scale_identity_loadings():
    D0 = np.array([[1.0, 0.5], [-0.3, 2.0]])
    c = ComponentParams(1.0, np.zeros(2), np.eye(2), D0, np.ones(2))
    np.testing.assert_array_equal(observed_scale(c)[1], D0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_observed_scale_is_spd(seed):
    rng = np.random.default_rng(seed)
    p, q = int(rng.integers(1, 6)), 1
    c = ComponentParams(1.0, np.zeros(p), rng.normal(size=(p, q)) * 5, np.zeros((q, 1)), rng.uniform(1e-4, 2, p))
    assert np.linalg.eigvalsh(observed_scale(c)[0]).min() > 0


def test_marginal_density_matches_hierarchy_integral():
    m = toy_model()
    for i in range(2):
        P = m.observed(i)
        for y in TOY_POINTS[:4]:
            ref = estep_quadrature(m.components[i], y)["f"]
            assert cfust_logpdf(y, P) == pytest.approx(np.log(ref), abs=1e-8)


def test_model_logpdf_single_component():
    c = comp()
    m = MixtureModel((c,), "cfustfa")
    x = np.random.default_rng(1).normal(size=(4, 3))
    np.testing.assert_array_equal(model_logpdf(m, x), cfust_logpdf(x, m.observed(0)))


def test_model_logpdf_duplicate_components_collapse():
    c = comp()
    from dataclasses import replace

    m2 = MixtureModel((replace(c, pi=0.3), replace(c, pi=0.7)), "cfustfa")
    m1 = MixtureModel((c,), "cfustfa")
    x = np.random.default_rng(2).normal(size=(4, 3))
    np.testing.assert_allclose(model_logpdf(m2, x), model_logpdf(m1, x), rtol=0, atol=1e-12)


def test_model_logpdf_linear_space_sum():
    m = toy_model()
    naive = sum(c.pi * np.exp(cfust_logpdf(TOY_POINTS[:5], m.observed(i))) for i, c in enumerate(m.components))
    np.testing.assert_allclose(model_logpdf(m, TOY_POINTS[:5]), np.log(naive), rtol=0, atol=1e-12)


def test_model_logpdf_permutation_invariance():
    m = toy_model()
    rev = MixtureModel(tuple(reversed(m.components)), m.family)
    x = TOY_POINTS
    np.testing.assert_allclose(model_logpdf(rev, x), model_logpdf(m, x), atol=1e-12)
    from dataclasses import replace

    c = comp(r=2, seed=3)
    swapped = replace(c, Delta=c.Delta[:, ::-1])
    a = model_logpdf(MixtureModel((c,), "cfustfa"), x[:, :1].repeat(3, axis=1))
    b = model_logpdf(MixtureModel((swapped,), "cfustfa"), x[:, :1].repeat(3, axis=1))
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_count_params_examples():
    assert count_params((5, 2, 2), Family.CFUSTFA, 1) == 25
    assert count_params((5, 2, 0), Family.MFA, 1) == 19
    for fam in Family:
        one = count_params((5, 2, 2 if fam.skewed else 0), fam, 1)
        assert count_params((5, 2, 2 if fam.skewed else 0), fam, 2) == 2 * one + 1


def test_count_params_family_relations():
    dims = (6, 3, 2)
    assert count_params(dims, "cfustfa", 1) - count_params(dims, "cfusnfa", 1) == 1
    assert count_params(dims, "mtfa", 1) - count_params(dims, "mfa", 1) == 1


def test_component_validation():
    with pytest.raises(DomainError):
        comp(pi=0.0)
    with pytest.raises(DomainError):
        ComponentParams(1.0, np.zeros(2), np.ones((2, 1)), np.zeros((1, 1)), [1.0, 0.0])
    with pytest.raises(DomainError):
        ComponentParams(1.0, np.zeros(2), np.ones((2, 1)), np.zeros((1, 1)), [1.0, 1.0], nu=-1.0)


def test_mixture_validation():
    with pytest.raises(DomainError, match="sum"):
        MixtureModel((comp(pi=0.5),), "cfustfa")
    with pytest.raises(DomainError):
        MixtureModel((comp(pi=0.5, q=2), comp(pi=0.5, q=1)), "cfustfa")
    with pytest.raises(DomainError):
        MixtureModel((comp(p=2, q=3),), "cfustfa")
    with pytest.raises(DomainError):
        MixtureModel((comp(),), "mfa")
    with pytest.raises(DomainError, match="unknown family"):
        Family.parse("gaussian")


def test_model_is_immutable():
    c = comp()
    with pytest.raises(ValueError):
        c.mu[0] = 1.0


def test_dataset_checks():
    with pytest.warns(UserWarning):
        Dataset(np.ones((2, 3)))
    with pytest.raises(DomainError):
        Dataset(np.array([[1.0, np.nan], [1.0, 2.0], [0.0, 0.0]]))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert Dataset(np.ones((5, 2)), [1, 1, 2, 2, 1]).n == 5


def test_sample_mixture_labels_and_determinism():
    m = toy_model()
    Y1, l1 = sample_mixture(m, 500, 4)
    Y2, l2 = sample_mixture(m, 500, 4)
    np.testing.assert_array_equal(Y1, Y2)
    np.testing.assert_array_equal(l1, l2)
    assert set(np.unique(l1)) <= {1, 2}
    assert abs(np.mean(l1 == 1) - 0.4) < 0.1
    with pytest.raises(DomainError):
        sample_mixture(m, 0, 1)
