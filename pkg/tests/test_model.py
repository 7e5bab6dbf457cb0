import numpy as np
import pytest
from hypothesis import given, strategies as st

from adaptexp.errors import DomainError
from adaptexp.model import (
    ArmModel,
    DiscretePrior,
    GaussianLocalPrior,
    LocalParam,
    arm_pair,
    fisher_info,
    kl_divergence,
    local_theta,
    log_lr,
    sample_stack,
    score,
)
from adaptexp.montecarlo import McEstimate, Stream


def test_score_examples():
    assert score(ArmModel.bernoulli(0.1), 1) == pytest.approx(10.0, rel=1e-14)
    assert score(ArmModel.bernoulli(0.5), 0) == pytest.approx(-2.0, rel=1e-14)
    assert score(ArmModel.gaussian(0.3), 0.3) == 0.0


def test_score_rejects_non_binary():
    with pytest.raises(DomainError):
        score(ArmModel.bernoulli(0.1), 0.1)


@pytest.mark.parametrize("theta0,expected", [(0.1, 1 / 0.09), (0.5, 4.0)])
def test_fisher_info_bernoulli(theta0, expected):
    assert fisher_info(ArmModel.bernoulli(theta0)) == pytest.approx(expected, rel=1e-14)


def test_fisher_info_gaussian():
    assert fisher_info(ArmModel.gaussian()) == 1.0


@pytest.mark.parametrize("theta0", [0.0, 1.0, -0.2, 1.5])
def test_bernoulli_reference_must_be_interior(theta0):
    with pytest.raises(DomainError):
        ArmModel.bernoulli(theta0)


def test_gaussian_reference_must_be_finite():
    with pytest.raises(DomainError):
        ArmModel.gaussian(np.inf)


def test_local_theta_examples(bern):
    assert local_theta(bern, 1.0, 100) == pytest.approx(0.2)
    assert local_theta(bern, -0.5, 100) == pytest.approx(0.05)
    for n in (1, 7, 10_000):
        assert local_theta(bern, 0.0, n) == 0.1


def test_local_theta_leaves_support(bern):
    with pytest.raises(DomainError):
        local_theta(bern, -1.0, 100)  # theta = 0
    with pytest.raises(DomainError):
        local_theta(bern, 9.0, 100)  # theta = 1
    with pytest.raises(ValueError):
        local_theta(bern, 0.0, 0)


def test_sample_stack_boundary_rejected(bern):
    with pytest.raises(DomainError):
        sample_stack(bern, -1.0, 100, 0)


def test_sample_stack_mean_and_determinism(bern):
    y = sample_stack(bern, 0.0, 1_000_000, Stream(3))
    est = McEstimate.from_samples(y)
    assert abs(est.mean - 0.1) <= 3 * est.std_error
    assert np.array_equal(y[:1000], sample_stack(bern, 0.0, 1_000_000, Stream(3))[:1000])
    assert not np.array_equal(y[:1000], sample_stack(bern, 0.0, 1_000_000, Stream(4))[:1000])


@pytest.mark.parametrize("model", [ArmModel.bernoulli(0.1), ArmModel.bernoulli(0.5), ArmModel.gaussian(0.3)])
def test_score_moments(model):
    y = sample_stack(model, 0.0, 400_000, Stream(11))
    psi = score(model, y)
    m1 = McEstimate.from_samples(psi)
    m2 = McEstimate.from_samples(psi**2)
    assert abs(m1.mean) <= 4 * m1.std_error
    assert abs(m2.mean - fisher_info(model)) <= 4 * m2.std_error


@given(st.floats(0.01, 0.99))
def test_bernoulli_score_affine_with_slope_info(theta0):
    m = ArmModel.bernoulli(theta0)
    slope = score(m, 1) - score(m, 0)
    assert slope == pytest.approx(fisher_info(m), rel=1e-12)
    assert score(m, 0) == pytest.approx(-theta0 * fisher_info(m), rel=1e-12)


@given(st.floats(0.02, 0.98), st.floats(-0.01, 0.01))
def test_kl_matches_expected_log_lr(theta0, d):
    m = ArmModel.bernoulli(theta0)
    theta = theta0 + d
    expected = theta * log_lr(m, theta, 1.0) + (1 - theta) * log_lr(m, theta, 0.0)
    assert kl_divergence(m, theta) == pytest.approx(expected, rel=1e-12, abs=1e-15)
    assert kl_divergence(m, theta) >= 0


def test_arm_pair_order():
    a1, a0 = ArmModel.bernoulli(0.2), ArmModel.bernoulli(0.3)
    m0, m1 = arm_pair((a1, a0))
    assert m1 is a1 and m0 is a0
    assert arm_pair(a1) == (a1, a1)


def test_local_param_validation():
    with pytest.raises(ValueError):
        LocalParam(np.nan, 0.0)
    assert LocalParam(1.0, 2.0).arm(1) == 1.0
    assert LocalParam(1.0, 2.0).arm(0) == 2.0


def test_priors_sample_shapes():
    gen = np.random.default_rng(0)
    h1, h0 = GaussianLocalPrior(1.0, 0.0, -1.0, 0.0).sample(gen, 5)
    assert np.all(h1 == 1.0) and np.all(h0 == -1.0)
    p = DiscretePrior([(1.0, 0.0), (-1.0, 0.0)], [0.5, 0.5])
    h1, h0 = p.sample(gen, 1000)
    assert set(np.unique(h1)) == {-1.0, 1.0} and np.all(h0 == 0)
    with pytest.raises(ValueError):
        DiscretePrior([(0.0, 0.0)], [0.9])
