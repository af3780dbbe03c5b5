import math

import pytest

from biasconsensus.errors import BiasError, ParameterError
from biasconsensus import theory as th


def test_voter_drift_lb_values():
    assert th.voter_drift_lb(100, 0.5, 0.8, 0.2) == pytest.approx(15.0)
    assert th.voter_drift_lb(0, 0.5, 0.8, 0.2) == 0.0
    assert th.voter_drift_lb(10, 0.6, 0.8, 0.2) > th.voter_drift_lb(10, 0.5, 0.8, 0.2)
    assert th.voter_drift_lb(10, 0.5, 0.9, 0.2) > th.voter_drift_lb(10, 0.5, 0.8, 0.2)
    with pytest.raises(BiasError):
        th.voter_drift_lb(10, 0.5, 0.5, 0.5)


def test_gamma_constant_pinned():
    # eps1^2 q0/3 = 0.009375 is the smaller branch; times phi = 0.3
    assert th.gamma_constant(0.8, 0.2, 0.3) == pytest.approx(0.0028125, rel=1e-12)


def test_gamma_linear_in_phi():
    g1 = th.gamma_constant(0.7, 0.3, 0.2)
    g2 = th.gamma_constant(0.7, 0.3, 0.4)
    assert g2 == pytest.approx(2 * g1)


def test_gamma_requires_positive_q1():
    with pytest.raises(BiasError):
        th.gamma_constant(1.0, 0.0, 0.5)


@pytest.mark.parametrize("eps2", [1e-6, 0.01, 1.0, 100.0])
def test_eps3_positive(eps2):
    assert (1 + eps2) * math.log1p(eps2) - eps2 > 0


def test_voter_phase_times_hand_value():
    pred = th.voter_phase_times(1024, 32, 0.5, 1.0, 0.0)
    assert pred.t1 == math.ceil(math.log(16) / math.log(1.25)) == 13
    assert pred.gamma is None and pred.fail_prob_phase1 is None


def test_voter_phase_times_degenerate_t2():
    pred = th.voter_phase_times(1024, 32, 1.0, 1.0, 0.0)
    assert pred.t2_degenerate
    assert pred.t2 == math.ceil(2 * math.log(1024))


def test_voter_phase_times_monotone():
    assert th.voter_phase_times(1024, 600, 0.5, 0.9, 0.1).t1 == 0
    t_small = th.voter_phase_times(1024, 20, 0.3, 0.9, 0.1).t1
    t_large = th.voter_phase_times(1024, 80, 0.3, 0.9, 0.1).t1
    assert t_small > t_large
    assert th.voter_phase_times(4096, 20, 0.3, 0.9, 0.1).t1 > t_small
    pred = th.voter_phase_times(4096, 100, 0.33, 0.9, 0.1)
    assert pred.total == pred.t1 + pred.t2
    assert 0 < pred.gamma < 1
    assert pred.to_dict()["total"] == pred.total


def test_two_choices_drift_lb_zero_at_threshold():
    n = 1000
    a = 200  # a/n = q1/(q0+q1) for q0=0.8, q1=0.2
    assert th.two_choices_drift_lb(a, n - a, n, 0.0, 0.8, 0.2) == pytest.approx(0.0, abs=1e-12)
    assert th.two_choices_drift_lb(n, 0, n, 0.3, 0.8, 0.2) == 0.0
    with pytest.raises(ParameterError):
        th.two_choices_drift_lb(3, 3, 7, 0.1, 0.8, 0.2)


def test_epsilon_prime_identities():
    assert th.epsilon_prime(50, 50, 100, 0.4, 0.4) == 0.0
    assert th.epsilon_prime(100, 0, 100, 0.8, 0.2) == pytest.approx(1 + 0.6)
    assert th.epsilon_prime(20, 80, 100, 0.8, 0.2) == pytest.approx(0.0, abs=1e-15)


def test_refined_bound_linear():
    assert th.refined_drift_lb(0, 0.2, 0.3, 0.5) == 0.0
    base = th.refined_drift_lb(10, 0.2, 0.3, 0.5)
    assert th.refined_drift_lb(20, 0.2, 0.3, 0.5) == pytest.approx(2 * base)
    assert th.refined_drift_lb(10, 0.4, 0.3, 0.5) == pytest.approx(2 * base)
    assert th.refined_drift_lb(10, 0.2, 0.6, 0.5) == pytest.approx(2 * base)
    assert th.refined_drift_lb(10, 0.2, 0.3, 1.0) == pytest.approx(2 * base)


def test_threshold_values():
    expected = 0.2 + math.sqrt(math.log(2000) / 8000)
    assert th.two_choices_threshold(2000, 0.0, 0.8, 0.2) == pytest.approx(expected)
    assert th.two_choices_threshold(2000, 0.0, 0.8, 0.2) == pytest.approx(0.230824, abs=1e-6)
    assert th.two_choices_threshold(10**6, 0.5, 0.8, 0.2) == pytest.approx(0.2 + 0.25)
    assert th.two_choices_threshold(10**4, 0.0, 0.5, 0.5) > 0.5


def test_two_choices_phase_times_pinned():
    pred = th.two_choices_phase_times(2000, 100, 0.1, 0.3, 0.8, 0.2, 0.5)
    r = 1 - 0.2 * 0.3 * (0.8 - 0.1)
    assert r == pytest.approx(0.958)
    assert pred.t2 == math.ceil(2 * math.log(2000) / math.log(1 / 0.958)) == 355
    assert pred.t1 == 0  # b0 = 100 <= n * gamma = 200
    assert 0 < pred.alpha < 1
    assert pred.alpha == pytest.approx(0.1**2 * 0.2**2 * 0.3**2 / 8)


def test_two_choices_phase_times_t1():
    pred = th.two_choices_phase_times(2000, 1400, 0.1, 0.3, 0.8, 0.2, 0.3)
    shrink = 0.2 * 0.3 * 0.3 / 4
    assert pred.t1 == math.ceil(math.log(1400 / 200) / -math.log(1 - shrink))


def test_two_choices_phase_times_rejects_bad_constants():
    with pytest.raises(ParameterError):
        th.two_choices_phase_times(2000, 100, 0.3, 0.1, 0.8, 0.2, 0.5)
    with pytest.raises(ParameterError):
        th.two_choices_phase_times(2000, 100, 0.1, 0.85, 0.8, 0.2, 0.5)


def test_alpha_in_unit_interval_over_grid():
    for q0 in (0.3, 0.6, 1.0):
        for q1 in (0.05, 0.2):
            ratio = q0 / (q0 + q1)
            for c in (0.05, ratio / 2, ratio * 0.99):
                for gamma in (c / 10, c):
                    pred = th.two_choices_phase_times(1000, 500, gamma, c, q0, q1, 0.4)
                    assert 0 < pred.alpha < 1


def test_two_choices_prediction_regime():
    lam = 1 / 1999
    pred = th.two_choices_prediction(2000, 600, lam, 0.8, 0.2)
    assert pred is not None
    assert pred.c == pytest.approx(0.8 - lam**2 - 0.01)
    assert pred.gamma == 0.1
    assert pred.threshold == pytest.approx(0.230824, abs=1e-6)
    assert th.two_choices_prediction(2000, 600, lam, 0.8, 0.0) is None
    assert th.two_choices_prediction(2000, 600, 0.95, 0.8, 0.2) is None


def test_squared_imbalance_lb_empty_b():
    assert th.squared_imbalance_lb(10, 0, 10, 0.3, 0, 3) == 0.0
