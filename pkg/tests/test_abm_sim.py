"""Tests for the forward simulators."""

from collections import Counter

import numpy as np
import pytest

from cli.acceptance import fixture_config, fixture_latents, simulator_violations
from core.abm_sim import (
    Simulator,
    init_graph,
    rewire,
    sample_latents,
    simulate,
    step_update,
)
from core.errors import ConfigurationError, InfeasibleRewireError
from models.opinion import Dynamics, LatentParams, ModelConfig, Outcome, Variant


def config_for(variant=Variant.BCMB, n_agents=2, **overrides):
    return ModelConfig(variant=variant, n_agents=n_agents, n_steps=1, **overrides)


# === step_update ===

def test_zero_gap_is_always_positive():
    config = config_for()
    x = np.array([0.5, 0.5])
    for participants in [(0, 1), (1, 0)] * 5:
        outcome, x = step_update(x, participants, LatentParams(0.05, 0.55), config)
        assert outcome == Outcome(s_plus=True)
    assert x.tolist() == [0.5, 0.5]


def test_convergence_moves_v_towards_u():
    outcome, x = step_update(np.array([0.6, 0.5]), (0, 1), LatentParams(0.25, 0.75), config_for(mu_plus=0.02))
    assert outcome.s_plus and not outcome.s_minus
    assert x[1] == pytest.approx(0.502)
    assert x[0] == 0.6


def test_step_update_copies_unless_inplace():
    x = np.array([0.6, 0.5])
    step_update(x, (0, 1), LatentParams(0.25, 0.75), config_for())
    assert x[1] == 0.5
    step_update(x, (0, 1), LatentParams(0.25, 0.75), config_for(), inplace=True)
    assert x[1] == pytest.approx(0.502)


def test_backfire_switched_off_leaves_opinion():
    config = config_for(Variant.BCMU)
    outcome, x = step_update(np.array([1.0, 0.0]), (0, 1), LatentParams(0.25, 0.75, beta=False), config)
    assert outcome.s_minus
    assert x[1] == 0.0


def test_divergence_is_clamped():
    config = config_for(mu_minus=0.05)
    outcome, x = step_update(np.array([0.0, 0.98]), (0, 1), LatentParams(0.25, 0.75), config)
    assert outcome.s_minus
    assert x[1] == 1.0


def test_neutral_band_changes_nothing():
    outcome, x = step_update(np.array([0.1, 0.6]), (0, 1), LatentParams(0.25, 0.75), config_for())
    assert outcome == Outcome()
    assert x.tolist() == [0.1, 0.6]


def test_feed_attends_to_first_k_entries():
    config = config_for(Variant.BCMI, n_agents=6, feed_len=5)
    x = np.array([0.1, 0.3, 0.9, 0.9, 0.9, 0.2])
    outcome, x_new = step_update(x, (0, 1, 2, 3, 4, 5), LatentParams(0.05, 0.55, k_attend=2), config)
    assert outcome.s_plus
    assert x_new[5] == pytest.approx(0.2)


def test_leaders_use_their_own_thresholds():
    config = config_for(Variant.BCMS)
    latents = LatentParams(0.35, 0.65, eps_plus_L=0.15, eps_minus_L=0.85, roles=(False, True))
    # gap 0.3: a follower would converge, a leader stays neutral
    outcome, _ = step_update(np.array([0.6, 0.3]), (0, 1), latents, config)
    assert outcome == Outcome()
    outcome, _ = step_update(np.array([0.6, 0.3]), (1, 0), latents, config)
    assert outcome.s_plus


# === Graphs ===

def test_full_density_gives_complete_graph():
    edges = init_graph(4, 1.0, seed=3)
    assert edges == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def test_init_graph_is_deterministic():
    assert init_graph(30, 0.2, seed=11) == init_graph(30, 0.2, seed=11)


def test_init_graph_mean_edge_count():
    counts = [len(init_graph(100, 0.1, seed=s)) for s in range(200)]
    se = np.sqrt(4950 * 0.1 * 0.9 / 200)
    assert abs(np.mean(counts) - 495.0) < 4 * se


@pytest.mark.parametrize("n_agents, density", [(1, 0.5), (0, 0.5), (10, 0.0), (10, 1.5)])
def test_init_graph_rejects_bad_arguments(n_agents, density):
    with pytest.raises(ConfigurationError):
        init_graph(n_agents, density, seed=0)


def test_rewire_swaps_endpoints_and_keeps_degrees():
    path = [(1, 2), (2, 3), (3, 4)]
    edges = rewire(path, (1, 2), (4, 3))
    assert edges == [(1, 3), (2, 3), (2, 4)]
    before = Counter(a for e in path for a in e)
    after = Counter(a for e in edges for a in e)
    assert before == after == {1: 1, 2: 2, 3: 2, 4: 1}


@pytest.mark.parametrize("uv, wz", [
    ((1, 2), (3, 4)),  # would duplicate (2, 3)
    ((1, 2), (2, 3)),  # shares an agent
    ((1, 3), (2, 4)),  # not edges
])
def test_rewire_rejects_inadmissible_swaps(uv, wz):
    with pytest.raises(ConfigurationError):
        rewire([(1, 2), (2, 3), (3, 4)], uv, wz)


# === Simulation ===

@pytest.mark.parametrize("variant", list(Variant))
def test_simulation_invariants_hold(variant):
    config = fixture_config(variant, seed=7)
    assert simulator_violations(config, fixture_latents(variant)) == []


@pytest.mark.parametrize("variant", list(Variant))
def test_simulation_shape(variant):
    config = fixture_config(variant, seed=1)
    trajectory = simulate(config, fixture_latents(variant))
    assert len(trajectory.events) == config.n_events
    steps = [e.step for e in trajectory.events]
    assert steps == sorted(steps)
    assert steps[0] == 0 and steps[-1] == config.n_steps - 1
    assert trajectory.truth == fixture_latents(variant)
    assert (trajectory.initial_edges is not None) == (variant == Variant.BCMG)


def test_simulation_is_deterministic():
    config = fixture_config(Variant.BCMG, seed=5)
    assert simulate(config, fixture_latents(Variant.BCMG)) == simulate(config, fixture_latents(Variant.BCMG))


def test_different_seeds_give_different_trajectories():
    latents = fixture_latents(Variant.BCMB)
    first = simulate(fixture_config(Variant.BCMB, seed=1), latents)
    second = simulate(fixture_config(Variant.BCMB, seed=2), latents)
    assert first != second


def test_initial_opinions_do_not_depend_on_latents():
    config = fixture_config(Variant.BCMB, seed=4)
    a = simulate(config, LatentParams(0.05, 0.95))
    b = simulate(config, LatentParams(0.45, 0.55))
    assert a.x0.tobytes() == b.x0.tobytes()


def test_graph_events_are_well_formed():
    config = ModelConfig(variant=Variant.BCMG, n_agents=15, n_steps=30, xi=0.3, graph_density=0.3, seed=2)
    trajectory = simulate(config, LatentParams(0.25, 0.75, gamma=0.2))
    for event in trajectory.events:
        if event.dynamics == Dynamics.UPDATE:
            assert len(event.participants) == 2
            assert not event.outcome.s_rewire
        elif len(event.participants) == 4:
            assert event.outcome == Outcome(s_rewire=True)
        else:
            assert not event.outcome.s_plus and not event.outcome.s_minus


def test_two_agent_graph_cannot_rewire():
    config = ModelConfig(variant=Variant.BCMG, n_agents=2, n_steps=1, xi=0.5, graph_density=1.0)
    with pytest.raises(InfeasibleRewireError):
        simulate(config, LatentParams(0.25, 0.75, gamma=0.5))


def test_payload_must_match_variant():
    config = fixture_config(Variant.BCMB)
    with pytest.raises(ConfigurationError):
        simulate(config, LatentParams(0.25, 0.75, beta=True))
    with pytest.raises(ConfigurationError):
        simulate(fixture_config(Variant.BCMI), LatentParams(0.25, 0.75, k_attend=9))


def test_switched_off_backfire_never_diverges():
    config = fixture_config(Variant.BCMU, seed=3, n_steps=40)
    sim = Simulator(config, LatentParams(0.05, 0.55, beta=False), record_history=True)
    trajectory = sim.run()
    previous = trajectory.x0
    n_backfire = 0
    for event, state in zip(trajectory.events, sim.history):
        if event.outcome.s_minus:
            n_backfire += 1
            assert state.tobytes() == previous.tobytes()
        previous = state
    assert n_backfire > 0


def test_recorded_outcomes_follow_the_hard_rule():
    config = fixture_config(Variant.BCMB, seed=9)
    latents = fixture_latents(Variant.BCMB)
    sim = Simulator(config, latents, record_history=True)
    trajectory = sim.run()
    x = trajectory.x0.copy()
    for event, state in zip(trajectory.events, sim.history):
        outcome, x = step_update(x, event.participants, latents, config)
        assert outcome == event.outcome
        assert x.tobytes() == state.tobytes()


# === Latent sampling ===

def test_sampled_roles_respect_ordering():
    config = ModelConfig(variant=Variant.BCMS, n_agents=20, n_steps=1)
    rng = np.random.default_rng(0)
    for _ in range(20):
        latents = sample_latents(Variant.BCMS, config, rng, leader_fraction=0.2)
        latents.validate_for(config)
        assert latents.eps_plus >= latents.eps_plus_L
        assert latents.eps_minus <= latents.eps_minus_L
        assert sum(latents.roles) == 4


@pytest.mark.parametrize("variant", [Variant.BCMB, Variant.BCMI, Variant.BCMU, Variant.BCMG])
def test_sampled_latents_fit_their_variant(variant):
    config = fixture_config(variant)
    rng = np.random.default_rng(1)
    for _ in range(10):
        sample_latents(variant, config, rng).validate_for(config)
