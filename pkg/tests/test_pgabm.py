"""Tests for the relaxed generative model."""

import dataclasses
import math

import numpy as np
import pytest
from scipy import special

from cli.acceptance import (
    finite_difference,
    fixture_config,
    fixture_latents,
    fixture_trajectory,
    gradient_mismatches,
)
from conftest import single_event_trajectory
from core import autodiff as ad
from core.abm_sim import Simulator
from core.errors import ConfigurationError, DimensionMismatchError, PoisonedValueError
from core.pgabm import (
    RelaxedModel,
    gumbel_softmax,
    gumbel_softmax_logits,
    initial_theta,
    inverse_transform,
    kappa,
    log_jacobian,
    log_joint,
    replay_opinions,
    theta_dim,
    theta_names,
    transform,
)
from models.inference import ConstrainedParams, PgabmConfig
from models.opinion import InteractionEvent, ModelConfig, Outcome, Trajectory, Variant


BCMB_CONFIG = ModelConfig(variant=Variant.BCMB, n_agents=2, n_steps=1)


# === Transforms ===

def test_zero_theta_maps_to_box_centres():
    params = transform(np.zeros(2), Variant.BCMB, BCMB_CONFIG)
    assert float(params.eps_plus) == 0.25
    assert float(params.eps_minus) == 0.75


def test_threshold_transform_values():
    params = transform(np.array([math.log(4.0), 40.0]), Variant.BCMB, BCMB_CONFIG)
    assert float(params.eps_plus) == pytest.approx(0.4)
    assert float(params.eps_minus) == pytest.approx(1.0)


@pytest.mark.parametrize("variant", list(Variant))
def test_inverse_transform_round_trip(variant):
    config = fixture_config(variant)
    theta = np.random.default_rng(0).normal(0.0, 1.5, theta_dim(variant, config))
    params = transform(theta, variant, config)
    back = inverse_transform(params, config)
    if variant == Variant.BCMI:
        # attention weights are renormalised, so only the thresholds and the
        # weight ratios survive the round trip
        np.testing.assert_allclose(back[:2], theta[:2], atol=1e-9)
        again = transform(back, variant, config)
        np.testing.assert_allclose(again.phi_k, params.phi_k, atol=1e-9)
    else:
        np.testing.assert_allclose(back, theta, atol=1e-9)


def test_theta_dimensions():
    assert theta_dim(Variant.BCMB, BCMB_CONFIG) == 2
    assert theta_dim(Variant.BCMS, fixture_config(Variant.BCMS)) == 12 + 4
    assert theta_dim(Variant.BCMI, fixture_config(Variant.BCMI)) == 2 + 4
    assert theta_dim(Variant.BCMU, fixture_config(Variant.BCMU)) == 3
    assert theta_dim(Variant.BCMG, fixture_config(Variant.BCMG)) == 3
    assert theta_names(Variant.BCMU, fixture_config(Variant.BCMU)) == ["eps_plus", "eps_minus", "beta"]


def test_transform_rejects_wrong_dimension():
    with pytest.raises(DimensionMismatchError):
        transform(np.zeros(3), Variant.BCMB, BCMB_CONFIG)


def test_transformed_samples_stay_in_their_boxes():
    config = fixture_config(Variant.BCMS)
    for theta in np.random.default_rng(1).normal(0.0, 5.0, (50, theta_dim(Variant.BCMS, config))):
        params = transform(theta, Variant.BCMS, config)
        for value in (params.eps_plus, params.eps_plus_L):
            assert 0.0 <= float(value) <= 0.5
        for value in (params.eps_minus, params.eps_minus_L):
            assert 0.5 <= float(value) <= 1.0
        assert np.all((params.phi_roles >= 0.0) & (params.phi_roles <= 1.0))


def test_attention_weights_lie_on_the_simplex():
    config = fixture_config(Variant.BCMI)
    params = transform(np.array([0.0, 0.0, 1.0, -2.0, 0.5, 3.0]), Variant.BCMI, config)
    assert np.sum(params.phi_k) == pytest.approx(1.0)
    assert params.k_hat() == 4


def test_log_jacobian_at_zero():
    assert log_jacobian(np.zeros(2), Variant.BCMB) == pytest.approx(2.0 * math.log(0.125))


def test_log_jacobian_is_symmetric_and_empty_safe():
    theta = np.array([0.7, -1.3, 2.1])
    assert log_jacobian(theta, Variant.BCMU) == pytest.approx(log_jacobian(-theta, Variant.BCMU))
    assert log_jacobian(np.zeros(0), Variant.BCMB) == 0.0


def test_attention_logits_count_as_independent_sigmoids():
    theta = np.array([0.0, 0.0, 1.0, -2.0, 0.5, 3.0])
    logits = theta[2:]
    per_logit = np.sum(special.log_expit(logits) + special.log_expit(-logits))
    assert log_jacobian(theta, Variant.BCMI) == pytest.approx(2.0 * math.log(0.125) + per_logit)


def test_initial_theta_starts_leaders_less_persuadable():
    config = fixture_config(Variant.BCMS)
    params = transform(initial_theta(Variant.BCMS, config), Variant.BCMS, config)
    assert float(params.eps_plus_L) < float(params.eps_plus)
    assert float(params.eps_minus_L) > float(params.eps_minus)
    assert not np.any(params.roles_hat())


# === kappa ===

def _event(outcome=Outcome()):
    return InteractionEvent(0, (0, 1), outcome)


def test_kappa_reference_values():
    params = ConstrainedParams(Variant.BCMB, eps_plus=0.25, eps_minus=0.75)
    p_plus, p_minus, p_rewire = kappa(np.array([0.6, 0.45]), _event(), params, PgabmConfig())
    assert p_plus == pytest.approx(0.960834, abs=1e-6)
    assert p_minus < 1e-8
    assert p_rewire == 0.0

    params = ConstrainedParams(Variant.BCMB, eps_plus=0.2, eps_minus=0.75)
    p_plus, _, _ = kappa(np.array([0.8, 0.24]), _event(), params, PgabmConfig())
    assert p_plus == pytest.approx(special.expit(-11.52), rel=1e-6)
    assert p_plus < 1e-5


def test_kappa_is_one_half_at_the_threshold():
    params = ConstrainedParams(Variant.BCMB, eps_plus=0.25, eps_minus=0.5)
    p_plus, _, _ = kappa(np.array([0.5, 0.25]), _event(), params, PgabmConfig())
    assert p_plus == pytest.approx(0.5)
    x = np.array([0.75, 0.25])
    _, p_minus, _ = kappa(x, _event(), params, PgabmConfig())
    assert p_minus == pytest.approx(0.5)


def test_kappa_is_monotone_in_thresholds():
    x = np.array([0.7, 0.4])
    previous = (0.0, 1.0)
    for eps in (0.1, 0.2, 0.3, 0.4):
        params = ConstrainedParams(Variant.BCMB, eps_plus=eps, eps_minus=0.5 + eps)
        p_plus, p_minus, _ = kappa(x, _event(), params, PgabmConfig())
        assert p_plus >= previous[0]
        assert p_minus <= previous[1]
        previous = (p_plus, p_minus)


def test_kappa_feed_mixture_lies_between_components():
    config = fixture_config(Variant.BCMI)
    x = np.linspace(0.0, 1.0, config.n_agents)
    event = InteractionEvent(0, (1, 9, 3, 11, 0), Outcome())
    per_k = []
    for k in range(4):
        params = ConstrainedParams(Variant.BCMI, 0.25, 0.75, phi_k=np.eye(4)[k])
        per_k.append(kappa(x, event, params, PgabmConfig())[0])
    params = ConstrainedParams(Variant.BCMI, 0.25, 0.75, phi_k=np.full(4, 0.25))
    mixed = kappa(x, event, params, PgabmConfig())[0]
    assert min(per_k) - 1e-12 <= mixed <= max(per_k) + 1e-12
    assert mixed == pytest.approx(np.mean(per_k))


# === Gumbel-Softmax ===

def test_one_hot_probabilities_keep_their_argmax():
    noise = np.random.default_rng(0).gumbel(size=(50, 3))
    for row in noise:
        out = gumbel_softmax(np.array([0.0, 1.0, 0.0]), 0.5, row)
        assert np.argmax(out) == 1


def test_two_class_large_gap_is_nearly_hard():
    out = gumbel_softmax(np.array([0.5, 0.5]), 0.1, np.array([5.0, 0.0]))
    assert out.max() > 0.99
    assert np.sum(out) == pytest.approx(1.0)


def test_gumbel_softmax_argmax_matches_perturbed_logits():
    rng = np.random.default_rng(2)
    probs = np.array([0.2, 0.3, 0.5])
    for tau in (0.05, 1.0, 10.0):
        noise = rng.gumbel(size=3)
        out = gumbel_softmax(probs, tau, noise)
        assert np.argmax(out) == np.argmax(np.log(probs) + noise)


def test_gumbel_softmax_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        gumbel_softmax(np.array([0.5, 0.5]), 0.1, np.zeros(3))


def test_batched_logits_normalise_along_first_axis():
    log_probs = np.log(np.array([[0.2, 0.7], [0.8, 0.3]]))
    out = gumbel_softmax_logits(log_probs, 0.5, np.zeros((2, 2)))
    np.testing.assert_allclose(out.sum(axis=0), [1.0, 1.0])


# === Replay ===

def test_replay_reproduces_simulated_states():
    config = fixture_config(Variant.BCMB, seed=3)
    sim = Simulator(config, fixture_latents(Variant.BCMB), record_history=True)
    trajectory = sim.run()
    (path,) = replay_opinions(trajectory, record_states=True)
    assert len(path.states) == len(sim.history)
    for replayed, simulated in zip(path.states, sim.history):
        assert replayed.tobytes() == simulated.tobytes()


def test_replay_paths_per_variant():
    assert len(replay_opinions(fixture_trajectory(Variant.BCMU))) == 2
    assert len(replay_opinions(fixture_trajectory(Variant.BCMI))) == 4
    assert len(replay_opinions(fixture_trajectory(Variant.BCMG))) == 1


def test_zero_rate_keeps_positive_events_still():
    config = ModelConfig(variant=Variant.BCMB, n_agents=10, n_steps=10, mu_plus=0.0, seed=1)
    trajectory = Simulator(config, fixture_latents(Variant.BCMB)).run()
    (path,) = replay_opinions(trajectory, record_states=True)
    previous = trajectory.x0
    for event, state in zip(trajectory.events, path.states):
        if event.outcome.s_plus:
            assert state.tobytes() == previous.tobytes()
        previous = state


# === Log joint ===

def test_empty_trajectory_gives_the_log_jacobian():
    trajectory = Trajectory(config=BCMB_CONFIG, x0=np.array([0.2, 0.7]), events=[])
    theta = np.array([0.3, -0.8])
    assert log_joint(trajectory, theta, Variant.BCMB) == pytest.approx(log_jacobian(theta, Variant.BCMB))


def test_single_event_log_joint():
    trajectory = single_event_trajectory(0.6, 0.45, Outcome(s_plus=True))
    params = ConstrainedParams(Variant.BCMB, eps_plus=0.25, eps_minus=0.75)
    theta = inverse_transform(params, BCMB_CONFIG)
    p_plus, p_minus, _ = kappa(trajectory.x0, trajectory.events[0], params, PgabmConfig())
    expected = math.log(p_plus) + math.log1p(-p_minus) + log_jacobian(theta, Variant.BCMB)
    assert log_joint(trajectory, theta, Variant.BCMB) == pytest.approx(expected, rel=1e-9)
    assert p_plus == pytest.approx(0.960834, abs=1e-6)


def test_log_joint_rejects_other_variant():
    trajectory = single_event_trajectory()
    with pytest.raises(ConfigurationError):
        log_joint(trajectory, np.zeros(3), Variant.BCMU)


def test_non_finite_likelihood_names_the_event():
    trajectory = single_event_trajectory(0.6, 0.3, Outcome(s_plus=True))
    trajectory.events.insert(0, InteractionEvent(0, (1, 0), Outcome()))
    model = RelaxedModel(trajectory, PgabmConfig(rho=math.inf))
    with pytest.raises(PoisonedValueError) as info:
        model.log_joint(np.zeros(2))
    assert info.value.event_index in (0, 1)


def test_minibatch_is_rescaled(bcmb_trajectory):
    model = RelaxedModel(bcmb_trajectory)
    theta = np.array([0.2, -0.4])
    params = transform(theta, Variant.BCMB, bcmb_trajectory.config)
    terms = np.asarray(model.event_log_likelihood(params))
    batch = np.array([0, 5, 17, 40])
    expected = terms[batch].sum() * len(terms) / len(batch) + log_jacobian(theta, Variant.BCMB)
    assert model.log_joint(theta, batch=batch) == pytest.approx(expected, rel=1e-12)


def test_certain_backfire_collapses_onto_the_diverging_path():
    trajectory = fixture_trajectory(Variant.BCMU)
    as_base = Trajectory(
        config=dataclasses.replace(trajectory.config, variant=Variant.BCMB),
        x0=trajectory.x0,
        events=trajectory.events,
    )
    switch = ConstrainedParams(Variant.BCMU, 0.3, 0.7, phi_beta=1.0)
    base = ConstrainedParams(Variant.BCMB, 0.3, 0.7)
    mixed = np.asarray(RelaxedModel(trajectory).event_log_likelihood(switch))
    plain = np.asarray(RelaxedModel(as_base).event_log_likelihood(base))
    np.testing.assert_allclose(mixed, plain, rtol=1e-12)


def test_followers_only_reduce_to_the_base_model():
    trajectory = fixture_trajectory(Variant.BCMS)
    n_agents = trajectory.config.n_agents
    as_base = Trajectory(
        config=dataclasses.replace(trajectory.config, variant=Variant.BCMB),
        x0=trajectory.x0,
        events=trajectory.events,
    )
    roles = ConstrainedParams(
        Variant.BCMS, eps_plus=0.3, eps_minus=0.7, eps_plus_L=0.1, eps_minus_L=0.9,
        phi_roles=np.zeros(n_agents),
    )
    base = ConstrainedParams(Variant.BCMB, 0.3, 0.7)
    model = RelaxedModel(trajectory)
    noise = model.role_noise(np.random.default_rng(0))
    relaxed = np.asarray(model.event_log_likelihood(roles, noise=noise))
    plain = np.asarray(RelaxedModel(as_base).event_log_likelihood(base))
    np.testing.assert_allclose(relaxed, plain, atol=1e-9)


def test_role_noise_must_match_agents():
    model = RelaxedModel(fixture_trajectory(Variant.BCMS))
    theta = initial_theta(Variant.BCMS, model.config)
    with pytest.raises(DimensionMismatchError):
        model.log_joint(theta, noise=np.zeros((3, 2)))


@pytest.mark.parametrize("variant", list(Variant))
def test_gradients_match_finite_differences(variant):
    model = RelaxedModel(fixture_trajectory(variant, seed=2))
    rng = np.random.default_rng(4)
    for _ in range(2):
        theta = rng.normal(0.0, 1.0, model.dim)
        _, auto = ad.value_and_grad(model.log_joint, theta)
        numeric = finite_difference(model.log_joint, theta)
        assert gradient_mismatches(auto, numeric) == []


def test_gradients_with_role_noise_match_finite_differences():
    model = RelaxedModel(fixture_trajectory(Variant.BCMS, seed=2))
    noise = model.role_noise(np.random.default_rng(5))
    theta = np.random.default_rng(6).normal(0.0, 1.0, model.dim)

    def density(t):
        return model.log_joint(t, noise=noise)

    _, auto = ad.value_and_grad(density, theta)
    assert gradient_mismatches(auto, finite_difference(density, theta)) == []
