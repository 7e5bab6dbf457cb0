import numpy as np
import pytest
from scipy import integrate, stats

from adaptexp.model import ArmModel, LocalParam
from adaptexp.policy import Alternating, Fixed, PolicyState, ThompsonBeta, Ucb, check_policy, choose, next_arm, ucb_index
from adaptexp.experiment import simulate_local
from adaptexp.montecarlo import McEstimate, Stream


def _prob_arm1(kind, counts, sums, j, n, reps=100_000, seed=0):
    c = np.repeat(np.asarray(counts, dtype=float).reshape(2, 1), reps, axis=1)
    s = np.repeat(np.asarray(sums, dtype=float).reshape(2, 1), reps, axis=1)
    arms = choose(kind, c, s, j, n, np.random.default_rng(seed))
    return McEstimate.from_samples(arms)


def test_ts_symmetric_without_data():
    est = _prob_arm1(ThompsonBeta(), [0, 0], [0, 0], 1, 100)
    assert abs(est.mean - 0.5) <= 3 * est.std_error


def test_ts_matches_beta_quadrature():
    # arm 1: 5/5 successes -> Beta(6, 1); arm 0: 0/5 -> Beta(1, 6)
    X, Y = stats.beta(6, 1), stats.beta(1, 6)
    oracle, _ = integrate.dblquad(lambda y, x: X.pdf(x) * Y.pdf(y), 0, 1, 0, lambda x: x, epsabs=1e-12)
    est = _prob_arm1(ThompsonBeta(), [5, 5], [0, 5], 11, 100)  # rows are (arm 0, arm 1)
    assert abs(est.mean - oracle) <= 3 * est.std_error + 1e-9


def test_ucb_forces_unsampled_arm():
    state = PolicyState(10, counts=[3, 0], sums=[3.0, 0.0])
    assert next_arm(Ucb(), state, np.random.default_rng(0)) == 1


def test_ucb_index_examples():
    assert ucb_index(0.1, 25, 100, 100) == pytest.approx(0.1)
    n = 1000
    j = n / np.e
    assert ucb_index(0.0, 2, j, n) == pytest.approx(1.0, rel=1e-12)
    assert ucb_index(0.3, 0, 5, 10) == np.inf


def test_ucb_literal_reading_has_zero_bonus_before_horizon():
    assert ucb_index(0.2, 4, 10, 100, log_j_over_n=True) == 0.2
    assert ucb_index(0.2, 4, 100, 100, log_j_over_n=True) == 0.2


def test_ucb_index_round_range():
    with pytest.raises(ValueError):
        ucb_index(0.1, 1, 0, 10)
    with pytest.raises(ValueError):
        ucb_index(0.1, 1, 11, 10)


def test_ucb_ties_broken_by_coin():
    est = _prob_arm1(Ucb(), [3, 3], [1, 1], 7, 20)
    assert abs(est.mean - 0.5) <= 3 * est.std_error


def test_fixed_and_alternating():
    gen = np.random.default_rng(0)
    zc = np.zeros((2, 4))
    assert np.all(choose(Fixed(1.0), zc, zc, 1, 10, gen) == 1)
    assert np.all(choose(Fixed(0.0), zc, zc, 1, 10, gen) == 0)
    assert np.all(choose(Alternating(), zc, zc, 1, 10, gen) == 1)
    assert np.all(choose(Alternating(), zc, zc, 2, 10, gen) == 0)


def test_policy_validation():
    with pytest.raises(ValueError):
        Fixed(1.5)
    with pytest.raises(ValueError):
        ThompsonBeta(0.0, 1.0)
    with pytest.raises(ValueError):
        check_policy(ThompsonBeta(), ArmModel.gaussian())
    check_policy(Ucb(), ArmModel.gaussian())


def test_next_arm_horizon():
    state = PolicyState(2, counts=[1, 1], sums=[0.0, 1.0])
    with pytest.raises(ValueError):
        next_arm(ThompsonBeta(), state, np.random.default_rng(0))


def test_fixed_one_gives_all_pulls_to_arm1(bern):
    b = simulate_local(bern, LocalParam(0, 0), Fixed(1.0), 50, 3, Stream(1))
    q1, q0 = b.q(np.linspace(0, 1, 51))
    assert np.allclose(q1, np.floor(np.linspace(0, 1, 51) * 50 + 1e-9) / 50)
    assert np.all(q0 == 0)


def test_ts_symmetric_over_horizon(bern):
    b = simulate_local(bern, LocalParam(0, 0), ThompsonBeta(), 200, 4000, Stream(2))
    est = McEstimate.from_samples(b.q(1.0)[0])
    assert abs(est.mean - 0.5) <= 3 * est.std_error
