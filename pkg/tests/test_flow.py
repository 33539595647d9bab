import math

import numpy as np
import pytest
from scipy.integrate import quad

from kimflow.errors import ConstructionError, DomainError, IntegrationDiverged
from kimflow.flow import (FlowConfig, coupled_distance, flow_map_batch, initial_points, integrate,
                          score_source)
from kimflow.measures import Gaussian, GaussianMixture, PerturbedSLC, SamplerSeed, standard_gaussian
from kimflow.ou import EvolvedScore


def shift_terminal(x0, m, T):
    # x' = e^{-(T-t)} m  =>  x(T) = x0 + m (1 - e^{-T})
    return x0 + m * (1 - math.exp(-T))


def scale_factor(sigma, T):
    # x' = x (1 - 1/s^2_{T-t}),  s^2_u = 1 + (sigma^2 - 1) e^{-2u}
    c = sigma**2 - 1
    val, _ = quad(lambda u: 1 - 1 / (1 + c * math.exp(-2 * u)), 0, T, epsabs=1e-14, epsrel=1e-14)
    return math.exp(val)


def test_scale_factor_oracle_closed_form():
    # the integral is 1/2 log(sigma^2 / s_T^2)
    for sigma, T in [(2.0, 10.0), (0.5, 3.0)]:
        sT = math.sqrt(1 + (sigma**2 - 1) * math.exp(-2 * T))
        assert scale_factor(sigma, T) == pytest.approx(sigma / sT, rel=1e-12)


def test_standard_gaussian_flow_is_identity():
    x0 = np.array([[0.3, -1.0], [2.0, 0.5]])
    tr = integrate(EvolvedScore(standard_gaussian(2)), x0, FlowConfig(T=5, steps=50))
    np.testing.assert_array_equal(tr.terminal, x0)
    np.testing.assert_array_equal(flow_map_batch(standard_gaussian(2), FlowConfig(T=5, steps=50), x0), x0)


@pytest.mark.parametrize("x0", [-1.5, 0.0, 2.2])
def test_gaussian_shift_terminal(x0):
    cfg = FlowConfig(T=10, steps=400)
    tr = integrate(EvolvedScore(Gaussian([1.0], np.eye(1))), [x0], cfg)
    assert tr.states.shape == (401, 1)
    assert tr.terminal[0] == pytest.approx(shift_terminal(x0, 1.0, 10), abs=1e-8)


def test_gaussian_scale_terminal():
    x0 = np.array([[-1.0], [0.5], [3.0]])
    out = flow_map_batch(Gaussian([0.0], 4.0 * np.eye(1)), FlowConfig(T=10, steps=400), x0)
    lam = scale_factor(2.0, 10)
    np.testing.assert_allclose(out, lam * x0, atol=1e-8)
    assert np.all(np.abs(out - 2 * x0) <= 1e-4 * np.abs(x0) + 1e-4)


def test_pushforward_moments():
    m = GaussianMixture([[-2.0], [2.0]], np.eye(1))
    cfg = FlowConfig(T=10, steps=400, init_mode="exact_qT")
    x0, _ = initial_points(m, m, cfg, 10_000, SamplerSeed(11))
    y = flow_map_batch(m, cfg, x0)[:, 0]
    n = y.size
    assert abs(y.mean()) <= 3 * y.std() / math.sqrt(n)
    assert abs((y**2).mean() - 5.0) <= 3 * (y**2).std() / math.sqrt(n)


def test_step_halving_converges():
    m = GaussianMixture([[-1.0, 0.5], [1.0, 0.0]], np.eye(2), [0.4, 0.6])
    x0 = np.random.default_rng(0).normal(size=(50, 2))
    a = flow_map_batch(m, FlowConfig(T=10, steps=400), x0)
    b = flow_map_batch(m, FlowConfig(T=10, steps=800), x0)
    assert np.abs(a - b).max() < 1e-6


def test_rk4_order():
    score = EvolvedScore(Gaussian([1.0], np.eye(1)))
    steps = np.array([100, 200, 400])
    errs = [abs(integrate(score, [0.0], FlowConfig(T=10, steps=int(s))).terminal[0] - shift_terminal(0.0, 1.0, 10))
            for s in steps]
    slope = np.polyfit(np.log(10.0 / steps), np.log(errs), 1)[0]
    assert 3.6 <= slope <= 4.4


@pytest.mark.parametrize("scheme,lo,hi", [("heun", 1.6, 2.4), ("euler", 0.8, 1.2)])
def test_lower_order_schemes(scheme, lo, hi):
    score = EvolvedScore(Gaussian([1.0], np.eye(1)))
    steps = np.array([100, 200, 400])
    errs = [abs(integrate(score, [0.0], FlowConfig(T=10, steps=int(s), scheme=scheme)).terminal[0]
                - shift_terminal(0.0, 1.0, 10)) for s in steps]
    assert lo <= np.polyfit(np.log(10.0 / steps), np.log(errs), 1)[0] <= hi


@pytest.mark.parametrize("m", [Gaussian([1.0], np.eye(1)), Gaussian([0.0], 4.0 * np.eye(1)),
                               GaussianMixture([[-0.5], [0.5]], np.eye(1)),
                               GaussianMixture([[-0.6], [0.6]], np.eye(1))])
def test_horizon_convergence(m):
    x0 = np.linspace(-3, 3, 13)[:, None]
    a = flow_map_batch(m, FlowConfig(T=8, steps=400), x0)
    b = flow_map_batch(m, FlowConfig(T=12, steps=600), x0)
    assert np.abs(a - b).max() < 1e-3


def test_geometric_tail_grid():
    grid = FlowConfig(T=10, steps=100, schedule="geometric_tail").time_grid()
    assert grid[0] == 0.0 and grid[-1] == 10.0
    assert np.all(np.diff(grid) > 0)
    assert np.diff(grid)[-1] < np.diff(grid)[0]


def test_geometric_tail_still_accurate():
    cfg = FlowConfig(T=10, steps=400, schedule="geometric_tail")
    tr = integrate(EvolvedScore(Gaussian([1.0], np.eye(1))), [0.0], cfg)
    assert tr.terminal[0] == pytest.approx(shift_terminal(0.0, 1.0, 10), abs=1e-6)


def test_parallel_batches_are_identical():
    m = GaussianMixture([[-1.0], [1.0]], np.eye(1), [0.3, 0.7])
    x0 = np.random.default_rng(1).normal(size=(101, 1))
    cfg = FlowConfig(T=6, steps=100)
    np.testing.assert_array_equal(flow_map_batch(m, cfg, x0), flow_map_batch(m, cfg, x0, workers=4, chunk=7))


def test_coupled_distance_same_measure():
    m = GaussianMixture([[-1.0], [1.0]], np.eye(1))
    cd = coupled_distance(m, m, FlowConfig(T=5, steps=50), 200, 0)
    assert cd.l2 == 0.0 and cd.linf == 0.0
    assert np.all(cd.distances == 0.0)


def test_coupled_distance_shift():
    cd = coupled_distance(standard_gaussian(1), Gaussian([1.0], np.eye(1)), FlowConfig(), 10_000, 0)
    assert cd.l2 == pytest.approx(1 - math.exp(-10), abs=1e-4)
    assert cd.linf == pytest.approx(cd.l2, abs=1e-9)


def test_coupled_distance_scale():
    cd = coupled_distance(standard_gaussian(1), Gaussian([0.0], 4.0 * np.eye(1)), FlowConfig(), 10_000, 0)
    assert cd.l2 == pytest.approx(1.0, rel=0.03)
    assert cd.l2_se > 0


def test_exact_qT_shift():
    cfg = FlowConfig(init_mode="exact_qT")
    cd = coupled_distance(standard_gaussian(1), Gaussian([1.0], np.eye(1)), cfg, 2000, 0)
    # initials differ by e^{-T} m, so the terminals differ by exactly |m| up to rk4 error
    assert cd.l2 == pytest.approx(1.0, abs=1e-6)


def perturbed_score_oracle(m, t, y):
    """grad log (mu Q_t)(y) in d = 1 via quadrature of the posterior mean."""
    a, v = math.exp(-t), 1 - math.exp(-2 * t)

    def w(x):
        return math.exp(float(m.log_density(np.array([x]))) - (y - a * x) ** 2 / (2 * v))

    z, _ = quad(w, -12, 12, epsabs=1e-13, limit=200)
    mx, _ = quad(lambda x: x * w(x), -12, 12, epsabs=1e-13, limit=200)
    return (a * mx / z - y) / v


def test_perturbed_uses_generic_score():
    m = PerturbedSLC(np.eye(1), [[0.5], [-0.5]])
    f = score_source(m, generic_n=20_000)
    for y in (0.3, -1.0, 2.0):
        assert f(0.5, np.array([[y]]))[0, 0] == pytest.approx(perturbed_score_oracle(m, 0.5, y), abs=0.02)
    np.testing.assert_allclose(f(0.0, np.array([[0.7]])), m.score(np.array([[0.7]])))


def test_divergence_is_reported():
    def bad(tau, y):
        return np.where(tau < 5, np.inf, 0.0) * y
    with pytest.raises(IntegrationDiverged) as err:
        integrate(bad, np.ones((3, 1)), FlowConfig(T=10, steps=20))
    assert err.value.index == 0


@pytest.mark.parametrize("kw", [dict(T=0.0), dict(steps=5), dict(scheme="rk45"),
                                dict(schedule="log"), dict(init_mode="random")])
def test_config_validation(kw):
    with pytest.raises(ConstructionError):
        FlowConfig(**kw)


def test_rejects_nonfinite_start():
    with pytest.raises(DomainError):
        integrate(EvolvedScore(standard_gaussian(1)), [np.nan])
