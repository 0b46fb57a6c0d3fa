"""Tests for the HMC sampler."""

import numpy as np
import pytest

from cli.acceptance import fixture_trajectory
from core.errors import ConfigurationError, HmcTuningError, TimeLimitExceeded
from core.mcmc import fit_hmc, hmc_sample, leapfrog
from models.inference import HmcHyperparams, Method
from models.opinion import Variant


def standard_normal(theta):
    return -0.5 * float(theta @ theta), -theta


def test_free_particle_moves_in_a_straight_line():
    theta, momentum = leapfrog(np.array([1.0, -1.0]), np.array([0.5, 2.0]), 0.1, 7, lambda t: np.zeros(2))
    np.testing.assert_allclose(theta, [1.0 + 0.35, -1.0 + 1.4])
    np.testing.assert_allclose(momentum, [0.5, 2.0])


def test_leapfrog_is_reversible():
    theta0, p0 = np.array([0.3, -1.2]), np.array([1.1, 0.4])
    theta1, p1 = leapfrog(theta0, p0, 0.1, 25, lambda t: -t)
    theta2, p2 = leapfrog(theta1, -p1, 0.1, 25, lambda t: -t)
    np.testing.assert_allclose(theta2, theta0, atol=1e-10)
    np.testing.assert_allclose(-p2, p0, atol=1e-10)


def test_energy_error_is_second_order():
    theta0, p0 = np.array([1.0]), np.array([0.5])

    def energy_error(step):
        n_steps = int(round(2.0 / step))
        theta, p = leapfrog(theta0, p0, step, n_steps, lambda t: -t)
        return abs((0.5 * theta @ theta + 0.5 * p @ p) - (0.5 * theta0 @ theta0 + 0.5 * p0 @ p0))

    ratio = energy_error(0.1) / energy_error(0.05)
    assert 3.0 < ratio < 5.0


def test_standard_normal_moments():
    # a quarter period per trajectory, so successive draws are nearly independent
    hyper = HmcHyperparams(step_size=0.157, n_leapfrog=10, adapt_step_size=False,
                           n_burnin=100, n_samples=5000, seed=0, log_every=0)
    chain = hmc_sample(standard_normal, np.array([1.0, -1.0]), hyper)
    draws = chain.draws
    assert draws.shape == (5000, 2)
    assert np.all(np.abs(draws.mean(axis=0)) < 5.0 / np.sqrt(5000))
    np.testing.assert_allclose(draws.var(axis=0), 1.0, rtol=0.1)
    assert np.all(np.isfinite(chain.log_densities))


def test_step_size_adaptation_reaches_reasonable_acceptance():
    hyper = HmcHyperparams(n_burnin=500, n_samples=1000, seed=0, log_every=0)
    chain = hmc_sample(standard_normal, np.array([1.0, -1.0]), hyper)
    assert 0.5 < chain.acceptance_rate <= 1.0
    assert chain.step_size != hyper.step_size


def test_correlated_gaussian_covariance():
    cov = np.array([[1.0, 0.6], [0.6, 2.0]])
    precision = np.linalg.inv(cov)

    def log_density(theta):
        return -0.5 * float(theta @ precision @ theta), -(precision @ theta)

    hyper = HmcHyperparams(step_size=0.15, n_leapfrog=12, adapt_step_size=False,
                           n_burnin=200, n_samples=5000, seed=1, log_every=0)
    draws = hmc_sample(log_density, np.zeros(2), hyper).draws
    np.testing.assert_allclose(np.cov(draws.T), cov, rtol=0.15, atol=0.1)


def test_chain_is_reproducible():
    hyper = HmcHyperparams(n_burnin=50, n_samples=100, seed=4, log_every=0)
    first = hmc_sample(standard_normal, np.zeros(2), hyper)
    second = hmc_sample(standard_normal, np.zeros(2), hyper)
    np.testing.assert_array_equal(first.draws, second.draws)


def test_hopeless_step_size_raises_tuning_error():
    hyper = HmcHyperparams(step_size=100.0, adapt_step_size=False, n_burnin=0, n_samples=50, log_every=0)
    with pytest.raises(HmcTuningError) as info:
        hmc_sample(standard_normal, np.array([1.0]), hyper)
    assert info.value.acceptance_rate < 0.01


def test_start_must_have_finite_density():
    def flat_nowhere(theta):
        return -np.inf, np.zeros_like(theta)

    with pytest.raises(ConfigurationError):
        hmc_sample(flat_nowhere, np.zeros(1), HmcHyperparams(n_burnin=0, n_samples=1))


def test_time_limit_is_checked_every_iteration():
    with pytest.raises(TimeLimitExceeded):
        hmc_sample(standard_normal, np.zeros(1), HmcHyperparams(n_burnin=10, n_samples=10), time_limit=0.0)


def test_fit_hmc_on_relaxed_model():
    trajectory = fixture_trajectory(Variant.BCMB, seed=2)
    hyper = HmcHyperparams(n_burnin=40, n_samples=40, n_leapfrog=5, seed=0, log_every=0)
    posterior = fit_hmc(trajectory, Variant.BCMB, hyper=hyper)
    assert posterior.source == Method.HMC
    assert len(posterior) == 40
    assert posterior.thetas.shape == (40, 2)
    for sample in posterior.samples:
        assert 0.0 <= float(sample.eps_plus) <= 0.5
        assert 0.5 <= float(sample.eps_minus) <= 1.0
    assert posterior.diagnostics["acceptance_rate"] >= 0.01
