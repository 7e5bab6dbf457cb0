import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from adaptexp.errors import ConfigError, NoInformationError
from adaptexp.experiment import Trajectory, simulate_local
from adaptexp.inference import (
    GaussianPrior,
    PriorMeanEstimator,
    ShrinkageEstimator,
    bayes_estimate_T_star,
    bayes_risk,
    finite_sample_estimate,
    finite_sample_estimator,
    frequentist_risk,
    in_sample_regret,
    mle,
    out_of_sample_regret,
    posterior,
    risk_curve,
    shrinkage_form,
)
from adaptexp.model import ArmModel, GaussianLocalPrior, LocalParam, PointMassPrior, fisher_info
from adaptexp.montecarlo import Stream
from adaptexp.policy import Alternating, Fixed, ThompsonBeta, Ucb


def quad_posterior(x, q, info, mu0, nu2):
    """Posterior mean and variance of h by direct integration of likelihood x prior."""
    post_sd = 1.0 / math.sqrt(info * q + 1.0 / nu2)
    centre = (math.sqrt(info) * x + mu0 / nu2) * post_sd**2
    lo, hi = centre - 40 * post_sd, centre + 40 * post_sd

    def dens(h):
        return math.exp(-((x - math.sqrt(info) * q * h) ** 2) / (2 * q) - (h - mu0) ** 2 / (2 * nu2))

    def moment(f, epsabs):
        return integrate.quad(lambda h: f(h) * dens(h), lo, hi, epsabs=epsabs, epsrel=1e-11, limit=200)[0]

    z = moment(lambda h: 1.0, 0.0)
    tol = 1e-12 * z
    m = centre + moment(lambda h: h - centre, tol) / z  # offset from centre avoids cancellation
    v = moment(lambda h: (h - m) ** 2, tol) / z
    return m, v


@pytest.mark.parametrize(
    "x,q,info,mu0,nu2",
    [(0.8, 0.5, 100 / 9, 0.0, 1.0), (-1.3, 0.9, 1.0, 0.5, 2.0), (0.1, 0.05, 4.0, -1.0, 0.3)],
)
def test_posterior_matches_quadrature(x, q, info, mu0, nu2):
    p = posterior(x, q, info, GaussianPrior(mu0, nu2))
    m, v = quad_posterior(x, q, info, mu0, nu2)
    assert p.mean == pytest.approx(m, abs=1e-8)
    assert p.variance == pytest.approx(v, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(
    x=st.floats(-3, 3),
    q=st.floats(0.02, 1.0),
    info=st.floats(0.5, 20.0),
    mu0=st.floats(-2, 2),
    nu2=st.floats(0.1, 10.0),
)
def test_posterior_matches_quadrature_random(x, q, info, mu0, nu2):
    p = posterior(x, q, info, GaussianPrior(mu0, nu2))
    m, v = quad_posterior(x, q, info, mu0, nu2)
    assert p.mean == pytest.approx(m, abs=1e-8)
    assert p.variance == pytest.approx(v, rel=1e-8)


def test_posterior_examples():
    p = posterior(0.0, 0.0, 4.0, GaussianPrior(0.3, 2.0))
    assert (p.mean, p.variance) == (0.3, 2.0)
    p = posterior(1.0, 0.5, 4.0, GaussianPrior())
    assert p.mean == pytest.approx(1.0) and p.variance == pytest.approx(0.5)
    with pytest.raises(NoInformationError):
        posterior(0.0, 0.0, 4.0, GaussianPrior())
    with pytest.raises(ValueError):
        posterior(0.0, 1.2, 4.0, GaussianPrior())
    with pytest.raises(ValueError):
        GaussianPrior(0.0, 0.0)


def test_T_star_is_armwise():
    priors = (GaussianPrior(0.5, 1.0), GaussianPrior(-0.2, 3.0))
    est = bayes_estimate_T_star((0.7, -0.4), (0.6, 0.4), (2.0, 5.0), priors)
    assert est.h1 == posterior(0.7, 0.6, 2.0, priors[0]).mean
    assert est.h0 == posterior(-0.4, 0.4, 5.0, priors[1]).mean


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(5, 500),
    frac=st.floats(0.05, 1.0),
    theta0=st.floats(0.05, 0.9),
    p_success=st.floats(0.0, 1.0),
    mu0=st.floats(-1, 1),
    nu2=st.one_of(st.floats(0.01, 5.0), st.just(math.inf)),
)
def test_shrinkage_identity(n, frac, theta0, p_success, mu0, nu2):
    m = ArmModel.bernoulli(theta0)
    info = fisher_info(m)
    pulls = max(1, int(frac * n))
    sum_y = round(p_success * pulls)
    q = pulls / n
    x = (sum_y - pulls * theta0) / (theta0 * (1 - theta0)) / math.sqrt(info * n)
    prior = GaussianPrior(mu0, nu2)
    a = finite_sample_estimate(x, q, m, n, prior)
    b = shrinkage_form(theta0, q, sum_y, n, info, prior)
    assert a == pytest.approx(b, abs=1e-12)


def test_flat_prior_is_sample_mean():
    m = ArmModel.bernoulli(0.1)
    n, pulls = 50, 20
    for successes in (0, 3, 20):
        x = (successes - pulls * 0.1) / 0.09 / math.sqrt(fisher_info(m) * n)
        assert finite_sample_estimate(x, pulls / n, m, n, GaussianPrior()) == pytest.approx(successes / pulls, abs=1e-14)
    g = ArmModel.gaussian(0.0)
    assert shrinkage_form(0.0, 0.4, 2.0, 10, 1.0, GaussianPrior()) == pytest.approx(0.5)


def test_mle_estimator_on_batch():
    m = ArmModel.bernoulli(0.1)
    b = simulate_local(m, LocalParam(0.5, 0.0), Ucb(), 200, 50, Stream(1))
    term = b.terminal(m)
    est = mle(term, m, 200)
    ok = term["n1"] > 0
    assert np.allclose(est[ok], term["s1"][ok] / term["n1"][ok])
    assert np.all(est[~ok] == 0.1)


def _traj(assign, stacks):
    assign = np.asarray(assign, dtype=np.int8)
    stacks = np.asarray(stacks, dtype=float)
    outcomes = np.array([stacks[a][k] for a, k in zip(assign, _positions(assign))])
    return Trajectory(len(assign), assign, outcomes, stacks)


def _positions(assign):
    seen = [0, 0]
    out = []
    for a in assign:
        out.append(seen[a])
        seen[a] += 1
    return out


def test_estimator_depends_only_on_terminal_statistics():
    m = ArmModel.bernoulli(0.2)
    stacks = [[0, 1, 1, 0, 1, 0], [1, 0, 1, 1, 0, 0]]
    a = _traj([1, 0, 1, 0, 1, 0], stacks)
    b = _traj([0, 0, 1, 1, 0, 1], stacks)
    priors = (GaussianPrior(0.1, 0.5), GaussianPrior(0.0, 2.0))
    assert finite_sample_estimator(a, m, priors) == finite_sample_estimator(b, m, priors)
    mean = finite_sample_estimator(a, m, GaussianPrior())
    assert mean == pytest.approx((2 / 3, 2 / 3))  # stack prefixes [1, 0, 1] and [0, 1, 1]


def test_estimator_no_information():
    m = ArmModel.bernoulli(0.2)
    t = _traj([0, 0, 0], [[1, 0, 1], [0, 0, 0]])
    with pytest.raises(NoInformationError):
        finite_sample_estimator(t, m, GaussianPrior())
    # a proper prior on arm 1 gives its prior mean
    est = finite_sample_estimator(t, m, (GaussianPrior(0.5, 1.0), GaussianPrior()))
    assert est[0] == pytest.approx(0.2 + 0.5 / math.sqrt(3))


def oracle(term, model, n):
    return term["theta1"]


@pytest.mark.parametrize("kind", [ThompsonBeta(), Ucb(), Fixed(0.5)], ids=["ts", "ucb", "fixed"])
def test_oracle_and_prior_mean_risk(kind):
    m = ArmModel.bernoulli(0.1)
    r = frequentist_risk(oracle, m, LocalParam(0.7, -0.3), kind, 100, 200, Stream(2))
    assert r.mean == 0.0 and r.std_error == 0.0
    r = frequentist_risk(PriorMeanEstimator(GaussianPrior(0.0, 1.0)), m, LocalParam(0, 0), kind, 100, 200, Stream(2))
    assert r.mean == pytest.approx(0.0, abs=1e-24)
    r = frequentist_risk(PriorMeanEstimator(GaussianPrior(0.0, 1.0)), m, LocalParam(1.0, 0), kind, 100, 200, Stream(2))
    assert r.mean == pytest.approx(1.0)


def test_point_mass_bayes_risk_is_frequentist_risk():
    m = ArmModel.bernoulli(0.1)
    h = LocalParam(0.5, -0.5)
    est = ShrinkageEstimator(GaussianPrior(0.0, 1.0))
    a = bayes_risk(est, m, PointMassPrior(h), ThompsonBeta(), 200, 1500, Stream(3))
    b = frequentist_risk(est, m, h, ThompsonBeta(), 200, 1500, Stream(3))
    assert a.mean == pytest.approx(b.mean, rel=1e-12)


def test_risk_deterministic_across_threads():
    m = ArmModel.bernoulli(0.3)
    est = ShrinkageEstimator(GaussianPrior(0.0, 1.0))
    args = (est, m, GaussianLocalPrior(0, 1, 0, 1), Ucb(), 400, 2500, Stream(4))
    assert bayes_risk(*args, threads=1) == bayes_risk(*args, threads=3)


def test_flat_prior_risk_gaussian_fixed():
    # Fixed allocation, Gaussian arms: sample mean over ~n/2 draws, risk ~ 2
    m = ArmModel.gaussian()
    r = frequentist_risk(mle, m, LocalParam(0.3, 0.0), Alternating(), 100, 4000, Stream(5))
    assert abs(r.mean - 2.0) <= 3 * r.std_error


def test_risk_curve_and_validation():
    m = ArmModel.bernoulli(0.1)
    est = ShrinkageEstimator(GaussianPrior(0.0, 1.0))
    c = risk_curve(est, m, [-0.5, 0.0, 1.0], 0.0, Fixed(0.5), 100, 300, Stream(6))
    assert c.means.shape == (3,) and np.all(c.means > 0)
    one = frequentist_risk(est, m, LocalParam(0.0, 0.0), Fixed(0.5), 100, 300, Stream(6).child(1))
    assert c.estimates[1] == one
    with pytest.raises(ValueError):
        risk_curve(est, m, [1.0, 0.0], 0.0, Fixed(0.5), 100, 300, Stream(6))


def test_differing_reference_warns_for_risk():
    models = (ArmModel.bernoulli(0.2), ArmModel.bernoulli(0.1))
    with pytest.warns(UserWarning):
        frequentist_risk(mle, models, LocalParam(0, 0), Fixed(0.5), 50, 10, Stream(0))


# Regret


def test_regret_examples():
    m = ArmModel.bernoulli(0.1)
    r = in_sample_regret(m, LocalParam(0.0, 0.0), ThompsonBeta(), 100, 500, Stream(7))
    assert r.mean == 0.0
    r = in_sample_regret(m, LocalParam(1.0, 0.0), Fixed(0.5), 400, 4000, Stream(7))
    assert abs(r.mean - 0.5) <= 3 * r.std_error
    assert in_sample_regret(m, LocalParam(1.0, 0.0), Fixed(1.0), 100, 50, Stream(7)).mean == 0.0
    assert in_sample_regret(m, LocalParam(0.0, 1.0), Fixed(1.0), 100, 50, Stream(7)).mean == 1.0
    with pytest.raises(ConfigError):
        in_sample_regret((ArmModel.bernoulli(0.2), m), LocalParam(1.0, 0.0), Fixed(0.5), 100, 10, Stream(7))


def test_ts_regret_share_grows_with_separation():
    m = ArmModel.bernoulli(0.1)
    share = []
    for h in (0.5, 1.0, 2.0):
        r = in_sample_regret(m, LocalParam(h, 0.0), ThompsonBeta(), 400, 2000, Stream(8))
        share.append(1 - r.mean / h)  # mean q1(1)
    assert share[0] < share[1] < share[2]


def test_out_of_sample_regret():
    m = ArmModel.bernoulli(0.1)
    r = out_of_sample_regret(m, LocalParam(0.0, 0.0), Ucb(), 100, 200, Stream(9))
    assert r.estimate.mean == 0.0
    r = out_of_sample_regret(m, LocalParam(0.0, 1.0), Fixed(1.0), 100, 200, Stream(9))
    assert r.fallbacks == 200 and r.estimate.mean == 1.0
    r = out_of_sample_regret(m, LocalParam(2.0, 0.0), Alternating(), 400, 2000, Stream(9))
    assert r.fallbacks == 0 and 0.0 < r.estimate.mean < 0.5
    r = out_of_sample_regret(m, LocalParam(0.0, 1.0), Ucb(), 100, 100, Stream(9), decision=lambda t: np.zeros_like(t["n1"]))
    assert r.estimate.mean == 0.0
    with pytest.raises(ValueError):
        out_of_sample_regret(m, LocalParam(0.0, 1.0), Ucb(), 100, 100, Stream(9), decision="oracle")
