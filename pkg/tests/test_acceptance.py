"""
Acceptance suites.

The fast suites run at reduced sizes with every test session; the full-size
suites and the recovery studies take minutes each and are marked slow (run
them with `pytest -m slow`).
"""

import inspect

import numpy as np
import pytest

from cli.acceptance import (
    check_elbo_bound,
    check_gradients,
    check_grid_determinism,
    check_gumbel_max,
    check_simulator_invariants,
    fixture_trajectory,
    run_suites,
)
from core.abm_sim import simulate
from core.experiment_runner import MethodSettings, derive_seed, fit_posterior
from core.mcmc import hmc_sample
from core.metrics import posterior_mean, score
from models.inference import AbcHyperparams, HmcHyperparams, Method
from models.opinion import LatentParams, ModelConfig, Variant

SEEDS = (0, 1, 2)


# === Fast suites ===

def test_gradients_match_finite_differences():
    result = check_gradients()
    assert result.passed, result.detail


def test_gumbel_max_is_exact():
    result = check_gumbel_max()
    assert result.passed, result.detail


def test_simulator_invariants():
    result = check_simulator_invariants(n_trajectories=50)
    assert result.passed, result.detail


def test_elbo_stays_below_the_evidence():
    result = check_elbo_bound(n_samples=200)
    assert result.passed, result.detail


def test_grid_is_deterministic():
    result = check_grid_determinism()
    assert result.passed, result.detail


def test_run_suites_reports_crashes_as_failures(monkeypatch):
    import cli.acceptance as acceptance

    def crash(seed):
        raise RuntimeError("crashed")

    monkeypatch.setitem(acceptance.SUITES, 2, crash)
    (result,) = run_suites([2])
    assert not result.passed
    assert "crashed" in result.detail


def test_check_runs_the_full_acceptance_sizes():
    assert inspect.signature(check_simulator_invariants).parameters["n_trajectories"].default == 10_000
    assert inspect.signature(check_elbo_bound).parameters["n_samples"].default == 10_000


@pytest.mark.slow
def test_simulator_invariants_at_full_size():
    result = check_simulator_invariants()
    assert result.passed, result.detail


@pytest.mark.slow
def test_elbo_bound_at_full_size():
    result = check_elbo_bound()
    assert result.passed, result.detail


# === Recovery studies ===

def fit_and_score(config, truth, method=Method.SVI, settings=None):
    settings = (settings or MethodSettings()).seeded(config.seed)
    trajectory = simulate(config, truth)
    estimate = posterior_mean(fit_posterior(method, trajectory, settings))
    return {s.name: s for s in score(truth, estimate, config)}


def recovery_config(variant, seed, n_agents, n_steps, **extra):
    return ModelConfig(variant=variant, n_agents=n_agents, n_steps=n_steps,
                       seed=derive_seed("recovery", variant.value, seed), **extra)


@pytest.mark.slow
@pytest.mark.parametrize("seed", SEEDS)
def test_base_model_recovery(seed):
    scores = fit_and_score(recovery_config(Variant.BCMB, seed, 100, 2048), LatentParams(0.25, 0.75))
    assert scores["eps_plus"].error <= 0.05
    assert scores["eps_minus"].error <= 0.05


@pytest.mark.slow
@pytest.mark.parametrize("seed", SEEDS)
def test_role_recovery(seed):
    roles = tuple(u < 10 for u in range(50))
    truth = LatentParams(0.35, 0.65, eps_plus_L=0.15, eps_minus_L=0.85, roles=roles)
    scores = fit_and_score(recovery_config(Variant.BCMS, seed, 50, 8192), truth)
    assert scores["roles"].error <= 0.15


@pytest.mark.slow
@pytest.mark.parametrize("seed", SEEDS)
def test_attention_depth_recovery(seed):
    config = recovery_config(Variant.BCMI, seed, 400, 8192, feed_len=10)
    scores = fit_and_score(config, LatentParams(0.25, 0.75, k_attend=4))
    assert scores["k_attend"].error <= 0.1


@pytest.mark.slow
@pytest.mark.parametrize("beta", [False, True])
@pytest.mark.parametrize("seed", SEEDS)
def test_backfire_switch_identification(seed, beta):
    config = recovery_config(Variant.BCMU, seed, 100, 2048, mu_plus=0.1, mu_minus=0.1)
    scores = fit_and_score(config, LatentParams(0.25, 0.75, beta=beta))
    assert scores["beta"].error <= 0.25


@pytest.mark.slow
@pytest.mark.parametrize("seed", SEEDS)
def test_rewiring_tolerance_recovery(seed):
    config = recovery_config(Variant.BCMG, seed, 100, 8192, xi=0.5)
    scores = fit_and_score(config, LatentParams(0.25, 0.75, gamma=0.4))
    assert scores["gamma"].error <= 0.05


@pytest.mark.slow
def test_svi_beats_abc():
    abc_settings = MethodSettings(abc=AbcHyperparams(n_sims=2000))
    svi_errors, abc_errors = [], []
    for n_steps in (512, 2048, 8192):
        config = recovery_config(Variant.BCMB, n_steps, 100, n_steps)
        truth = LatentParams(0.25, 0.75)
        svi_errors.append(fit_and_score(config, truth)["eps_rmse"].error)
        abc_errors.append(fit_and_score(config, truth, Method.ABC, abc_settings)["eps_rmse"].error)
    assert np.mean(svi_errors) < np.mean(abc_errors)


@pytest.mark.slow
def test_hmc_standard_normal_moments():
    def log_density_and_grad(theta):
        return -0.5 * float(theta @ theta), -theta

    chain = hmc_sample(log_density_and_grad, np.zeros(1),
                       HmcHyperparams(step_size=0.157, n_leapfrog=10, adapt_step_size=False,
                                      n_burnin=1000, n_samples=5000, seed=9))
    draws = chain.draws[:, 0]
    assert abs(draws.mean()) <= 4.0 * draws.std(ddof=1) / np.sqrt(len(draws))
    assert draws.var(ddof=1) == pytest.approx(1.0, rel=0.1)


@pytest.mark.slow
def test_hmc_recovers_the_fixture():
    trajectory = fixture_trajectory(Variant.BCMB)
    settings = MethodSettings(hmc=HmcHyperparams(n_burnin=1000, n_samples=2000, seed=5))
    estimate = posterior_mean(fit_posterior(Method.HMC, trajectory, settings))
    scores = {s.name: s for s in score(trajectory.truth, estimate, trajectory.config)}
    assert scores["eps_plus"].error <= 0.06
    assert scores["eps_minus"].error <= 0.06


@pytest.mark.slow
def test_hmc_base_model_recovery():
    settings = MethodSettings(hmc=HmcHyperparams(n_burnin=500, n_samples=500))
    scores = fit_and_score(recovery_config(Variant.BCMB, 0, 100, 2048), LatentParams(0.25, 0.75),
                           Method.HMC, settings)
    assert scores["eps_plus"].error <= 0.06
    assert scores["eps_minus"].error <= 0.06
