import math

import numpy as np
import pytest

from kimflow.errors import DomainError
from kimflow.fisher import (decay_rate_check, fi, fi_decay_curve, fi_gaussian_closed, fi_inf,
                            gronwall_factor, kl_gaussian, w2_gaussian)
from kimflow.measures import Gaussian, GaussianMixture, SamplerSeed, mixture_lipschitz_bound, standard_gaussian
from kimflow.ou import ThetaProfile

SHIFT = Gaussian([0.6, 0.0, 0.8], np.eye(3))
TIMES = [0.0, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0]


def random_gaussian(rng, d):
    B = rng.normal(size=(d, d))
    return Gaussian(rng.normal(size=d), B @ B.T + 0.5 * np.eye(d))


def test_fi_same_measure_is_zero():
    m = GaussianMixture([[-1.0], [1.0]], np.eye(1))
    assert fi(m, m, 1000, 0) == (0.0, 0.0)


def test_fi_shift_is_constant():
    est = fi(SHIFT, standard_gaussian(3), 100_000, 1)
    assert est.estimate == pytest.approx(1.0, abs=1e-12)
    assert est.stderr <= 1e-12


def test_fi_scale():
    est = fi(Gaussian([0.0], 4.0 * np.eye(1)), standard_gaussian(1), 100_000, 2)
    assert abs(est.estimate - 2.25) <= 3 * est.stderr


def test_fi_closed_examples():
    g = Gaussian([1.0, 2.0], np.diag([2.0, 0.5]))
    assert fi_gaussian_closed(g, g) == 0.0
    assert fi_gaussian_closed(Gaussian([1.0, 2.0], np.eye(2)), Gaussian([0.0, 0.5], np.eye(2))) == pytest.approx(3.25)
    assert fi_gaussian_closed(Gaussian([0.0], 4.0 * np.eye(1)), standard_gaussian(1)) == pytest.approx(2.25, abs=1e-15)


def test_fi_monte_carlo_matches_closed_form():
    rng = np.random.default_rng(2024)
    for k in range(20):
        d = int(rng.integers(1, 5))
        g1, g2 = random_gaussian(rng, d), random_gaussian(rng, d)
        est = fi(g1, g2, 20_000, SamplerSeed(3, k))
        assert abs(est.estimate - fi_gaussian_closed(g1, g2)) <= 3 * est.stderr


def test_fi_inf_shift():
    sup = fi_inf(SHIFT, standard_gaussian(3), 500, 0)
    assert sup.estimate == pytest.approx(1.0, abs=1e-12)
    assert sup.lower_bound


def test_fi_inf_same_measure():
    m = GaussianMixture([[-1.0], [1.0]], np.eye(1))
    assert fi_inf(m, m, 100, 0).estimate == 0.0


def test_fi_inf_grows_for_unbounded_gap():
    nu, mu = Gaussian([0.0], 4.0 * np.eye(1)), standard_gaussian(1)
    small, large = fi_inf(nu, mu, 1_000, 0).estimate, fi_inf(nu, mu, 100_000, 0).estimate
    assert large > small


def test_fi_inf_dominates_fi():
    nu = GaussianMixture([[-0.6], [0.6]], np.eye(1))
    mu = GaussianMixture([[-0.5], [0.5]], np.eye(1))
    est = fi(nu, mu, 10_000, 1)
    assert fi_inf(nu, mu, 2_000, 2).estimate >= est.estimate - 3 * est.stderr


def test_decay_shift_saturates():
    curve = fi_decay_curve(SHIFT, standard_gaussian(3), ThetaProfile.slc(1.0), TIMES, 2000, 0)
    exact = np.exp(-2 * np.asarray(TIMES))
    np.testing.assert_allclose(curve.estimates, exact, rtol=1e-12)
    np.testing.assert_allclose(curve.envelope, exact, rtol=1e-12)
    assert curve.within_envelope().all()


def test_decay_same_measure():
    m = GaussianMixture([[-1.0], [1.0]], np.eye(1))
    curve = fi_decay_curve(m, m, ThetaProfile.slc(1.0), TIMES, 500, 0)
    assert np.all(curve.estimates == 0.0)


def test_decay_mixture_under_envelope():
    mu = GaussianMixture([[-2.0], [2.0]], np.eye(1))
    nu = GaussianMixture([[-2.1], [2.1]], np.eye(1))
    a, _, L = mixture_lipschitz_bound(mu)
    curve = fi_decay_curve(nu, mu, ThetaProfile.perturbed(a, L), TIMES, 10_000, 4)
    assert curve.within_envelope().all()
    assert np.all(np.diff(curve.estimates) <= 3 * np.hypot(curve.stderr[1:], curve.stderr[:-1]))


def test_decay_times_validated():
    with pytest.raises(DomainError):
        fi_decay_curve(SHIFT, standard_gaussian(3), ThetaProfile.slc(1.0), [0.0, 0.5, 0.2], 10, 0)


def test_gronwall_factor_slc_one():
    t = np.array([0.0, 0.5, 2.0])
    np.testing.assert_allclose(gronwall_factor(ThetaProfile.slc(1.0), t), np.exp(-2 * t), rtol=1e-15)


def test_rate_check_shift_is_equality():
    rc = decay_rate_check(Gaussian([1.0], np.eye(1)), standard_gaussian(1), 0.5, 1000, 0)
    assert rc.derivative == pytest.approx(-2 * math.exp(-1.0), rel=1e-6)
    assert rc.bound == pytest.approx(-2 * math.exp(-1.0), rel=1e-12)


def test_rate_check_mixture():
    mu = GaussianMixture([[-1.0], [1.0]], np.eye(1))
    nu = GaussianMixture([[-1.3], [0.9]], np.eye(1), [0.4, 0.6])
    for t in (0.2, 0.7, 1.5):
        rc = decay_rate_check(nu, mu, t, 20_000, 1)
        assert rc.derivative <= rc.bound + 3 * rc.stderr + 1e-6


def test_w2_and_kl_examples():
    g1, g2 = Gaussian([1.0, 2.0], np.eye(2)), Gaussian([0.0, 0.0], np.eye(2))
    assert w2_gaussian(g1, g2) == pytest.approx(math.sqrt(5), rel=1e-14)
    assert kl_gaussian(g1, g2) == pytest.approx(2.5, rel=1e-14)
    assert w2_gaussian(g1, g1) == 0.0 and kl_gaussian(g1, g1) == pytest.approx(0.0, abs=1e-15)
    assert w2_gaussian(Gaussian([0.0], 4.0 * np.eye(1)), standard_gaussian(1)) == pytest.approx(1.0, rel=1e-14)


def test_kl_direction():
    # KL(N(0,4) || N(0,1)) = (4 - 1 - log 4) / 2; the reverse direction differs
    wide, std = Gaussian([0.0], 4.0 * np.eye(1)), standard_gaussian(1)
    assert kl_gaussian(wide, std) == pytest.approx(0.5 * (3 - math.log(4)), rel=1e-14)
    assert kl_gaussian(std, wide) == pytest.approx(0.5 * (0.25 - 1 + math.log(4)), rel=1e-14)


def test_w2_matches_commuting_formula(rng):
    # commuting covariances: W2^2 = |dm|^2 + |S1^{1/2} - S2^{1/2}|_F^2
    g1, g2 = Gaussian([1.0, 0.0], np.diag([4.0, 1.0])), Gaussian([0.0, 1.0], np.diag([1.0, 9.0]))
    assert w2_gaussian(g1, g2) == pytest.approx(math.sqrt(2 + 1 + 4), rel=1e-13)


def test_hwi_chain():
    rng = np.random.default_rng(77)
    for _ in range(20):
        d = int(rng.integers(1, 5))
        g1, g2 = random_gaussian(rng, d), random_gaussian(rng, d)
        alpha = float(np.linalg.eigvalsh(g2.precision)[0])
        assert w2_gaussian(g1, g2) ** 2 <= fi_gaussian_closed(g1, g2) / alpha**2 + 1e-10


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        fi(standard_gaussian(1), standard_gaussian(2), 10, 0)
