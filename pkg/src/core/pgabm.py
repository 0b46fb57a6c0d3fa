"""
Relaxed probabilistic generative model of a bounded-confidence trajectory.

Outcome probabilities replace the hard thresholds by steep sigmoids:
    P(s+ = 1) = sigmoid(rho * (eps+ - |dx|))
    P(s- = 1) = sigmoid(-rho * (eps- - |dx|))
    P(sr = 1) = sigmoid(-rho * (gamma - |dx|))      (rewire events only)

Opinions are deterministic given the observed outcomes, so they are
replayed once, outside the differentiated program. Discrete latents are
handled per variant:
- roles (BCM-S): Gumbel-Softmax relaxation, one draw per density evaluation
- attention depth K (BCM-I): exact mixture over the F replayed paths
- backfire switch beta (BCM-U): exact mixture over the two replayed paths

Unconstrained layout of theta:
    BCMb   (eps+, eps-)
    BCMS   (eps+_F, eps+_L, eps-_F, eps-_L, role_0 .. role_{N-1})
    BCMI   (eps+, eps-, k_1 .. k_F)
    BCMU   (eps+, eps-, beta)
    BCMG   (eps+, eps-, gamma)
"""

import logging
import math
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from core import autodiff as ad
from core.abm_sim import apply_outcome, feed_delta
from core.errors import ConfigurationError, DimensionMismatchError, PoisonedValueError
from models.inference import ConstrainedParams, PgabmConfig
from models.opinion import Dynamics, InteractionEvent, ModelConfig, Trajectory, Variant

logger = logging.getLogger(__name__)

LOG2 = math.log(2.0)


# === Parameter layout and transforms ===

def theta_dim(variant: Union[Variant, str], config: ModelConfig) -> int:
    """Dimension M of the unconstrained vector."""
    variant = Variant.parse(variant)
    if variant == Variant.BCMS:
        return config.n_agents + 4
    if variant == Variant.BCMI:
        return 2 + config.feed_len
    if variant in (Variant.BCMU, Variant.BCMG):
        return 3
    return 2


def _n_thresholds(variant: Variant) -> int:
    return 4 if variant == Variant.BCMS else 2


def theta_names(variant: Union[Variant, str], config: ModelConfig) -> List[str]:
    """Human-readable name of every theta component."""
    variant = Variant.parse(variant)
    if variant == Variant.BCMS:
        return ["eps_plus", "eps_plus_L", "eps_minus", "eps_minus_L"] + [
            f"role_{u}" for u in range(config.n_agents)
        ]
    names = ["eps_plus", "eps_minus"]
    if variant == Variant.BCMI:
        names += [f"k_{j + 1}" for j in range(config.feed_len)]
    elif variant == Variant.BCMU:
        names.append("beta")
    elif variant == Variant.BCMG:
        names.append("gamma")
    return names


def _check_dim(theta, variant: Variant, config: ModelConfig):
    expected = theta_dim(variant, config)
    shape = theta.shape if hasattr(theta, "shape") else np.shape(theta)
    if len(shape) != 1 or shape[0] != expected:
        raise DimensionMismatchError(f"theta for {variant.value}", expected, shape)


def transform(theta, variant: Union[Variant, str], config: ModelConfig) -> ConstrainedParams:
    """
    Map theta to constrained space.

    eps+ = sigmoid(t)/2, eps- = sigmoid(t)/2 + 1/2, probabilities and gamma
    are plain sigmoids. BCM-I attention weights are renormalised to the
    simplex. Works on numpy arrays and on autodiff variables.
    """
    variant = Variant.parse(variant)
    if not ad.is_var(theta):
        theta = np.asarray(theta, dtype=float)
    _check_dim(theta, variant, config)

    def half(t):
        return ad.sigmoid(t) * 0.5

    if variant == Variant.BCMS:
        return ConstrainedParams(
            variant=variant,
            eps_plus=half(theta[0]),
            eps_plus_L=half(theta[1]),
            eps_minus=half(theta[2]) + 0.5,
            eps_minus_L=half(theta[3]) + 0.5,
            phi_roles=ad.sigmoid(theta[4:]),
        )

    params = ConstrainedParams(variant=variant, eps_plus=half(theta[0]), eps_minus=half(theta[1]) + 0.5)
    if variant == Variant.BCMI:
        params.phi_k = ad.exp(log_attention_weights(theta[2:]))
    elif variant == Variant.BCMU:
        params.phi_beta = ad.sigmoid(theta[2])
    elif variant == Variant.BCMG:
        params.gamma = ad.sigmoid(theta[2])
    return params


def log_attention_weights(theta_k):
    """log of sigmoid(theta_k) renormalised to sum to one."""
    log_phi = ad.log_sigmoid(theta_k)
    return log_phi - ad.logsumexp(log_phi)


def inverse_transform(params: ConstrainedParams, config: ModelConfig) -> np.ndarray:
    """Analytic inverse of transform() on the open constrained boxes."""
    variant = params.variant
    parts = [special.logit(2.0 * float(params.eps_plus))]
    if variant == Variant.BCMS:
        parts += [
            special.logit(2.0 * float(params.eps_plus_L)),
            special.logit(2.0 * float(params.eps_minus) - 1.0),
            special.logit(2.0 * float(params.eps_minus_L) - 1.0),
        ]
        parts += list(special.logit(np.asarray(params.phi_roles, dtype=float)))
    else:
        parts.append(special.logit(2.0 * float(params.eps_minus) - 1.0))
        if variant == Variant.BCMI:
            parts += list(special.logit(np.asarray(params.phi_k, dtype=float)))
        elif variant == Variant.BCMU:
            parts.append(special.logit(float(params.phi_beta)))
        elif variant == Variant.BCMG:
            parts.append(special.logit(float(params.gamma)))
    theta = np.asarray(parts, dtype=float)
    _check_dim(theta, variant, config)
    return theta


def log_jacobian(theta, variant: Union[Variant, str]):
    """
    log |d constrained / d theta| summed over components.

    Each component contributes log sigmoid'(t) = log sigmoid(t) + log sigmoid(-t);
    thresholds carry an extra -log 2 for their halved range.

    BCM-I attention logits count as K independent sigmoids: the term is the
    Jacobian to the unnormalised weights, not to the renormalised simplex, so
    a standard normal theta does not give a uniform prior over the weights.
    """
    variant = Variant.parse(variant)
    size = theta.size if hasattr(theta, "size") else np.size(theta)
    if size == 0:
        return 0.0
    if not ad.is_var(theta):
        theta = np.asarray(theta, dtype=float)
    total = ad.sum_(ad.log_sigmoid(theta) + ad.log_sigmoid(-theta))
    return total - min(_n_thresholds(variant), size) * LOG2


def initial_theta(variant: Union[Variant, str], config: ModelConfig) -> np.ndarray:
    """
    Starting point for optimisation and sampling.

    Zero everywhere except BCM-S, where leaders start less persuadable than
    followers and every agent starts as a likely follower.
    """
    variant = Variant.parse(variant)
    theta = np.zeros(theta_dim(variant, config))
    if variant == Variant.BCMS:
        theta[1] = -1.0
        theta[3] = 1.0
        theta[4:] = -2.0
    return theta


# === Outcome probabilities ===

def kappa(
    x: np.ndarray,
    event: InteractionEvent,
    params: ConstrainedParams,
    pgabm_config: PgabmConfig,
) -> Tuple[float, float, float]:
    """
    (p_plus, p_minus, p_rewire) of one event at opinion state x.

    BCM-S mixes the thresholds of v by its leader probability, BCM-I mixes
    over attention depths by the K weights. p_rewire is 0 outside BCM-G and
    update events of BCM-G have p_rewire = 0 while rewire events have
    p_plus = p_minus = 0.
    """
    rho = pgabm_config.rho
    variant = params.variant
    eps_plus = float(ad.value_of(params.eps_plus))
    eps_minus = float(ad.value_of(params.eps_minus))

    def pair(gap, e_plus, e_minus):
        return special.expit(rho * (e_plus - gap)), special.expit(-rho * (e_minus - gap))

    if variant == Variant.BCMI:
        feed, v = event.participants[:-1], event.participants[-1]
        weights = np.asarray(ad.value_of(params.phi_k), dtype=float)
        p_plus = p_minus = 0.0
        for j, weight in enumerate(weights):
            pp, pm = pair(abs(feed_delta(x, feed, j + 1, v)), eps_plus, eps_minus)
            p_plus += weight * pp
            p_minus += weight * pm
        return float(p_plus), float(p_minus), 0.0

    u, v = event.participants[0], event.participants[1]
    gap = abs(float(x[u]) - float(x[v]))

    if variant == Variant.BCMG and event.dynamics == Dynamics.REWIRE:
        gamma = float(ad.value_of(params.gamma))
        return 0.0, 0.0, float(special.expit(-rho * (gamma - gap)))

    if variant == Variant.BCMS:
        phi = float(np.asarray(ad.value_of(params.phi_roles))[v])
        eps_plus = phi * float(ad.value_of(params.eps_plus_L)) + (1.0 - phi) * eps_plus
        eps_minus = phi * float(ad.value_of(params.eps_minus_L)) + (1.0 - phi) * eps_minus

    p_plus, p_minus = pair(gap, eps_plus, eps_minus)
    return float(p_plus), float(p_minus), 0.0


def sample_gumbel(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard Gumbel noise."""
    return rng.gumbel(size=shape)


def gumbel_softmax_logits(log_probs, tau: float, noise):
    """
    Relaxed one-hot vectors along axis 0.

    log_probs and noise have shape (K, ...); log_probs may be an autodiff
    variable, noise is a constant.
    """
    z = (log_probs + noise) * (1.0 / tau)
    lse = ad.logsumexp(z, axis=0)
    shape = (1,) + tuple(np.shape(ad.value_of(z))[1:])
    return ad.exp(z - ad.reshape(lse, shape))


def gumbel_softmax(probs, tau: float, noise, prob_floor: float = 1e-12) -> np.ndarray:
    """
    Relax a categorical draw with the given Gumbel noise.

    probs lies on the simplex; entries below prob_floor are raised to it.
    As tau -> 0 the output tends to the one-hot of argmax(log probs + noise).
    """
    probs = np.asarray(probs, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if probs.shape != noise.shape:
        raise DimensionMismatchError("Gumbel noise", probs.shape, noise.shape)
    if np.any(probs < prob_floor):
        logger.warning(f"Clamping {int(np.sum(probs < prob_floor))} probabilities to floor {prob_floor}")
        probs = np.maximum(probs, prob_floor)
    return np.asarray(gumbel_softmax_logits(np.log(probs), tau, noise))


# === Opinion replay ===

@dataclass
class ReplayPath:
    """
    Opinions replayed from observed outcomes.

    deltas[e] is the signed gap of event e on this path: x_u - x_v, or
    mean(first K feed opinions) - x_v for BCM-I. states, when recorded,
    holds the opinions after every event.
    """

    deltas: np.ndarray
    final: np.ndarray
    states: Optional[List[np.ndarray]] = None


def _replay(
    trajectory: Trajectory,
    k_attend: Optional[int] = None,
    diverge: bool = True,
    roles: Optional[Sequence[bool]] = None,
    record_states: bool = False,
) -> ReplayPath:
    config = trajectory.config
    x = np.array(trajectory.x0, dtype=float)
    deltas = np.empty(len(trajectory.events))
    states: Optional[List[np.ndarray]] = [] if record_states else None
    bcmi = config.variant == Variant.BCMI

    for index, event in enumerate(trajectory.events):
        if bcmi:
            v = event.participants[-1]
            delta = feed_delta(x, event.participants[:-1], k_attend, v)
        else:
            u, v = event.participants[0], event.participants[1]
            delta = float(x[u]) - float(x[v])
        deltas[index] = delta

        if event.dynamics == Dynamics.UPDATE:
            if roles is not None and roles[v]:
                mu_plus, mu_minus = config.leader_mu_plus, config.leader_mu_minus
            else:
                mu_plus, mu_minus = config.mu_plus, config.mu_minus
            if not diverge:
                mu_minus = 0.0
            x[v] = apply_outcome(float(x[v]), delta, event.outcome, mu_plus, mu_minus)
        if states is not None:
            states.append(x.copy())

    return ReplayPath(deltas=deltas, final=x, states=states)


def replay_opinions(
    trajectory: Trajectory,
    roles: Optional[Sequence[bool]] = None,
    record_states: bool = False,
) -> List[ReplayPath]:
    """
    Deterministic opinion path(s) implied by the observed outcomes.

    Returns one path for BCMb / BCMS / BCMG, two for BCMU (index 0: beta=0,
    index 1: beta=1) and F for BCMI (index j: K = j + 1). BCM-S uses leader
    rates for agents flagged in roles.
    """
    config = trajectory.config
    if config.variant == Variant.BCMU:
        return [_replay(trajectory, diverge=b, record_states=record_states) for b in (False, True)]
    if config.variant == Variant.BCMI:
        return [
            _replay(trajectory, k_attend=k, record_states=record_states)
            for k in range(1, config.feed_len + 1)
        ]
    if config.variant == Variant.BCMS:
        return [_replay(trajectory, roles=roles, record_states=record_states)]
    return [_replay(trajectory, record_states=record_states)]


# === Log-likelihood ===

def _log_update_terms(gap, eps_plus, eps_minus, s_plus, s_minus, rho: float):
    """Per-event log P(s+) + log P(s-) of update interactions."""
    a = (eps_plus - gap) * rho
    b = (eps_minus - gap) * rho
    log_plus = s_plus * ad.log_sigmoid(a) + (1.0 - s_plus) * ad.log_sigmoid(-a)
    log_minus = s_minus * ad.log_sigmoid(-b) + (1.0 - s_minus) * ad.log_sigmoid(b)
    return log_plus + log_minus


def _log_rewire_terms(gap, gamma, s_rewire, rho: float):
    c = (gamma - gap) * rho
    return s_rewire * ad.log_sigmoid(-c) + (1.0 - s_rewire) * ad.log_sigmoid(c)


def _log_mixture(log_weights, terms_by_path):
    """Per-event log sum_j w_j P(s | path j); terms_by_path has shape (E, J)."""
    return ad.logsumexp(terms_by_path + log_weights, axis=1)


class RelaxedModel:
    """
    Differentiable log-joint of one observed trajectory.

    Observed arrays and replayed opinion gaps are computed once at
    construction; BCM-S replays under role-dependent rates are cached per
    hard role assignment.
    """

    def __init__(self, trajectory: Trajectory, pgabm_config: Optional[PgabmConfig] = None):
        self.trajectory = trajectory
        self.config = trajectory.config
        self.variant = trajectory.config.variant
        self.pgabm = pgabm_config or PgabmConfig()

        events = trajectory.events
        self.n_events = len(events)
        self.s_plus = np.array([e.outcome.s_plus for e in events], dtype=float)
        self.s_minus = np.array([e.outcome.s_minus for e in events], dtype=float)
        self.s_rewire = np.array([e.outcome.s_rewire for e in events], dtype=float)
        self.rewire_mask = np.array([e.dynamics == Dynamics.REWIRE for e in events], dtype=bool)
        self.targets = np.array([trajectory.target_of(e) for e in events], dtype=int)

        self._role_dependent = self.variant == Variant.BCMS and (
            self.config.leader_mu_plus != self.config.mu_plus
            or self.config.leader_mu_minus != self.config.mu_minus
        )
        self._gap_cache: Dict[Optional[bytes], np.ndarray] = {}
        self._cache_lock = threading.Lock()
        if not self._role_dependent:
            paths = replay_opinions(trajectory)
            self._gap_cache[None] = np.abs(np.stack([p.deltas for p in paths], axis=1))

        logger.debug(f"Relaxed {self.variant.value} model ready: {self.n_events} events")

    @property
    def dim(self) -> int:
        return theta_dim(self.variant, self.config)

    def gaps(self, roles: Optional[np.ndarray] = None) -> np.ndarray:
        """|delta| per event and path, shape (E, paths)."""
        if not self._role_dependent:
            return self._gap_cache[None]
        key = np.asarray(roles, dtype=bool).tobytes()
        with self._cache_lock:
            if key not in self._gap_cache:
                logger.debug(f"Replaying BCM-S opinions for {int(np.sum(roles))} leaders")
                path = _replay(self.trajectory, roles=np.asarray(roles, dtype=bool))
                self._gap_cache[key] = np.abs(path.deltas)[:, None]
            return self._gap_cache[key]

    def role_noise(self, rng: np.random.Generator) -> np.ndarray:
        """Gumbel noise for one relaxed role draw, shape (N, 2)."""
        return sample_gumbel(rng, (self.config.n_agents, 2))

    def event_log_likelihood(
        self,
        params: ConstrainedParams,
        noise: Optional[np.ndarray] = None,
        batch: Optional[np.ndarray] = None,
        log_weights=None,
        relaxed_roles=None,
    ):
        """
        Per-event log-likelihood, shape (E,) or (len(batch),).

        noise is the (N, 2) Gumbel draw for BCM-S roles; without it the
        expected role mixture phi is used. relaxed_roles skips the draw and
        uses the given relaxed leader indicators. log_weights overrides the
        log mixture weights of BCM-I / BCM-U (computed from params otherwise).
        """
        rho = self.pgabm.rho
        variant = self.variant
        index = slice(None) if batch is None else np.asarray(batch, dtype=int)

        roles = None
        if variant == Variant.BCMS:
            roles = np.asarray(ad.value_of(params.phi_roles), dtype=float) > 0.5
        gaps = self.gaps(roles)[index]
        s_plus = self.s_plus[index]
        s_minus = self.s_minus[index]

        if variant == Variant.BCMS:
            if relaxed_roles is None:
                relaxed_roles = self._relaxed_roles(params, noise)
            leader = ad.take(relaxed_roles, self.targets[index])
            eps_plus = leader * params.eps_plus_L + (1.0 - leader) * params.eps_plus
            eps_minus = leader * params.eps_minus_L + (1.0 - leader) * params.eps_minus
            return _log_update_terms(gaps[:, 0], eps_plus, eps_minus, s_plus, s_minus, rho)

        if variant == Variant.BCMI:
            if log_weights is None:
                with np.errstate(divide="ignore"):
                    log_weights = ad.log(params.phi_k)
            terms = _log_update_terms(gaps, params.eps_plus, params.eps_minus, s_plus[:, None], s_minus[:, None], rho)
            return _log_mixture(log_weights, terms)

        if variant == Variant.BCMU:
            if log_weights is None:
                with np.errstate(divide="ignore"):
                    log_weights = ad.concat([ad.log(1.0 - params.phi_beta), ad.log(params.phi_beta)])
            terms = _log_update_terms(gaps, params.eps_plus, params.eps_minus, s_plus[:, None], s_minus[:, None], rho)
            return _log_mixture(log_weights, terms)

        if variant == Variant.BCMG:
            rewire = self.rewire_mask[index]
            update_terms = _log_update_terms(gaps[:, 0], params.eps_plus, params.eps_minus, s_plus, s_minus, rho)
            rewire_terms = _log_rewire_terms(gaps[:, 0], params.gamma, self.s_rewire[index], rho)
            return update_terms * (~rewire).astype(float) + rewire_terms * rewire.astype(float)

        return _log_update_terms(gaps[:, 0], params.eps_plus, params.eps_minus, s_plus, s_minus, rho)

    def _relaxed_roles(self, params: ConstrainedParams, noise: Optional[np.ndarray]):
        if noise is None:
            return params.phi_roles
        noise = np.asarray(noise, dtype=float)
        expected = (self.config.n_agents, 2)
        if noise.shape != expected:
            raise DimensionMismatchError("role noise", expected, noise.shape)
        phi = params.phi_roles
        with np.errstate(divide="ignore"):
            log_probs = ad.concat([ad.log(phi), ad.log(1.0 - phi)])
        log_probs = ad.reshape(log_probs, (2, self.config.n_agents))
        return ad.take(gumbel_softmax_logits(log_probs, self.pgabm.tau, noise.T), 0)

    def _log_weights(self, theta):
        if self.variant == Variant.BCMI:
            return log_attention_weights(theta[2:])
        if self.variant == Variant.BCMU:
            return ad.concat([ad.log_sigmoid(-theta[2]), ad.log_sigmoid(theta[2])])
        return None

    def _log_role_probs(self, theta):
        return ad.reshape(
            ad.concat([ad.log_sigmoid(theta[4:]), ad.log_sigmoid(-theta[4:])]),
            (2, self.config.n_agents),
        )

    def log_joint(self, theta, noise: Optional[np.ndarray] = None, batch: Optional[np.ndarray] = None):
        """
        log p(y, theta): relaxed log-likelihood plus the log-Jacobian of the
        transform (a flat prior on constrained space).

        With a batch of event indices the likelihood is rescaled by E / B.
        """
        if not ad.is_var(theta):
            theta = np.asarray(theta, dtype=float)
        params = transform(theta, self.variant, self.config)
        log_prior = log_jacobian(theta, self.variant)
        if self.n_events == 0:
            return log_prior

        relaxed_roles = None
        if self.variant == Variant.BCMS and noise is not None:
            noise = np.asarray(noise, dtype=float)
            if noise.shape != (self.config.n_agents, 2):
                raise DimensionMismatchError("role noise", (self.config.n_agents, 2), noise.shape)
            relaxed_roles = ad.take(gumbel_softmax_logits(self._log_role_probs(theta), self.pgabm.tau, noise.T), 0)

        terms = self.event_log_likelihood(
            params,
            batch=batch,
            log_weights=self._log_weights(theta),
            relaxed_roles=relaxed_roles,
        )
        values = np.asarray(ad.value_of(terms), dtype=float)
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            event_index = bad if batch is None else int(np.asarray(batch)[bad])
            raise PoisonedValueError(f"Non-finite log-likelihood at event {event_index}", event_index)

        log_lik = ad.sum_(terms)
        if batch is not None:
            log_lik = log_lik * (self.n_events / len(batch))
        return log_lik + log_prior


def log_joint(
    trajectory: Trajectory,
    theta,
    variant: Union[Variant, str],
    pgabm_config: Optional[PgabmConfig] = None,
    noise: Optional[np.ndarray] = None,
):
    """
    Functional form of RelaxedModel.log_joint.

    Replays the trajectory on every call; build a RelaxedModel once when
    evaluating the same trajectory repeatedly.
    """
    variant = Variant.parse(variant)
    if variant != trajectory.variant:
        raise ConfigurationError(
            f"Trajectory is {trajectory.variant.value}, cannot evaluate a {variant.value} density"
        )
    return RelaxedModel(trajectory, pgabm_config).log_joint(theta, noise=noise)
