"""
Stochastic variational inference on the relaxed model.

theta ~ q_lambda is drawn by reparameterisation, theta = mean + exp(log_scale) * z,
so the Monte Carlo ELBO is a recorded function of lambda and one reverse
sweep gives its gradient. The entropy of q is added in closed form.
"""

import logging
import math
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from core import autodiff as ad
from core.errors import (
    ConfigurationError,
    DimensionMismatchError,
    DivergenceError,
    NonFiniteGradientError,
    NonFiniteSampleError,
    PoisonedValueError,
    TimeLimitExceeded,
)
from core.pgabm import RelaxedModel, initial_theta, theta_dim, transform
from models.inference import (
    Method,
    PgabmConfig,
    PosteriorSamples,
    SviHyperparams,
    SviResult,
    VariationalParams,
)
from models.opinion import ModelConfig, Trajectory, Variant

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


# === Variational family ===

class VariationalFamily(ABC):
    """A reparameterisable family q_lambda over R^M with flat parameter vector lambda."""

    @abstractmethod
    def n_params(self, dim: int) -> int:
        """Length of lambda for an M-dimensional theta."""

    @abstractmethod
    def initial(self, theta0: np.ndarray, init_log_scale: float) -> np.ndarray:
        """Starting lambda centred on theta0."""

    @abstractmethod
    def draw(self, lam, z):
        """theta as a differentiable function of lambda and standard noise z."""

    @abstractmethod
    def entropy(self, lam):
        """H[q_lambda] = -E_q[log q_lambda(theta)]."""


class MeanFieldNormal(VariationalFamily):
    """Diagonal normal; lambda = (mean, log_scale)."""

    def n_params(self, dim: int) -> int:
        return 2 * dim

    def initial(self, theta0: np.ndarray, init_log_scale: float) -> np.ndarray:
        theta0 = np.asarray(theta0, dtype=float)
        return np.concatenate([theta0, np.full(theta0.shape, init_log_scale)])

    def _split(self, lam):
        dim = ad.value_of(lam).shape[0] // 2
        return lam[:dim], lam[dim:]

    def draw(self, lam, z):
        mean, log_scale = self._split(lam)
        return mean + ad.exp(log_scale) * z

    def entropy(self, lam):
        _, log_scale = self._split(lam)
        dim = ad.value_of(log_scale).shape[0]
        return ad.sum_(log_scale) + 0.5 * dim * (1.0 + LOG_2PI)

    def log_density(self, lam: np.ndarray, theta: np.ndarray) -> float:
        """log q_lambda(theta), for checks against the closed-form entropy."""
        params = VariationalParams.from_vector(lam)
        z = (np.asarray(theta) - params.mean) / params.scale
        return float(np.sum(-0.5 * z * z - params.log_scale - 0.5 * LOG_2PI))


DEFAULT_FAMILY = MeanFieldNormal()


@dataclass
class ElboNoise:
    """
    Exogenous randomness of one ELBO estimate.

    z has shape (n_samples, M); roles, for BCM-S, shape (n_samples, N, 2).
    """

    z: np.ndarray
    roles: Optional[np.ndarray] = None

    @property
    def n_samples(self) -> int:
        return self.z.shape[0]


def draw_noise(rng: np.random.Generator, n_samples: int, model: RelaxedModel) -> ElboNoise:
    z = rng.standard_normal((n_samples, model.dim))
    roles = None
    if model.variant == Variant.BCMS:
        roles = np.stack([model.role_noise(rng) for _ in range(n_samples)])
    return ElboNoise(z=z, roles=roles)


# === ELBO ===

def monte_carlo_elbo(
    log_density: Callable,
    lam,
    noise: ElboNoise,
    family: VariationalFamily = DEFAULT_FAMILY,
):
    """
    mean_s log_density(theta_s, s) + H[q_lambda].

    log_density(theta, s) receives the s-th reparameterised draw and the
    sample index (used to pick per-sample discrete noise).
    """
    total = 0.0
    for s in range(noise.n_samples):
        theta = family.draw(lam, noise.z[s])
        try:
            term = log_density(theta, s)
        except PoisonedValueError as e:
            raise NonFiniteSampleError(np.asarray(ad.value_of(theta)).tolist()) from e
        if not np.isfinite(ad.value_of(term)):
            raise NonFiniteSampleError(np.asarray(ad.value_of(theta)).tolist())
        total = total + term
    return total * (1.0 / noise.n_samples) + family.entropy(lam)


def _model_density(model: RelaxedModel, noise: ElboNoise, batch: Optional[np.ndarray]) -> Callable:
    def log_density(theta, s):
        roles = None if noise.roles is None else noise.roles[s]
        return model.log_joint(theta, noise=roles, batch=batch)

    return log_density


def elbo_estimate(
    lam: Union[VariationalParams, np.ndarray],
    trajectory: Trajectory,
    variant: Union[Variant, str],
    pgabm_config: Optional[PgabmConfig] = None,
    n_samples: int = 1,
    noise: Optional[ElboNoise] = None,
    seed: int = 0,
    model: Optional[RelaxedModel] = None,
    family: VariationalFamily = DEFAULT_FAMILY,
) -> float:
    """
    Monte Carlo ELBO at lambda.

    Draws fresh noise from seed unless noise is given; identical noise gives
    identical estimates.
    """
    variant = Variant.parse(variant)
    model = model or RelaxedModel(trajectory, pgabm_config)
    lam = lam.to_vector() if isinstance(lam, VariationalParams) else np.asarray(lam, dtype=float)
    expected = family.n_params(theta_dim(variant, trajectory.config))
    if lam.shape != (expected,):
        raise DimensionMismatchError("variational parameters", expected, lam.shape)
    if noise is None:
        noise = draw_noise(np.random.default_rng(seed), n_samples, model)
    return float(monte_carlo_elbo(_model_density(model, noise, None), lam, noise, family))


# === Adam ===

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "AdamState":
        return cls(m=np.zeros(dim), v=np.zeros(dim), t=0)


def adam_step(
    params: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    hyper: SviHyperparams,
) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam descent step on grad."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != params.shape or state.m.shape != params.shape:
        raise DimensionMismatchError("Adam gradient", params.shape, grad.shape)
    if not np.all(np.isfinite(grad)):
        raise DivergenceError(state.t, "non-finite gradient")

    t = state.t + 1
    m = hyper.adam_beta1 * state.m + (1.0 - hyper.adam_beta1) * grad
    v = hyper.adam_beta2 * state.v + (1.0 - hyper.adam_beta2) * grad * grad
    m_hat = m / (1.0 - hyper.adam_beta1 ** t)
    v_hat = v / (1.0 - hyper.adam_beta2 ** t)
    params = params - hyper.learning_rate * m_hat / (np.sqrt(v_hat) + hyper.adam_eps)
    return params, AdamState(m=m, v=v, t=t)


# === Fit ===

def fit_svi(
    trajectory: Trajectory,
    variant: Union[Variant, str],
    pgabm_config: Optional[PgabmConfig] = None,
    hyper: Optional[SviHyperparams] = None,
    time_limit: Optional[float] = None,
    family: VariationalFamily = DEFAULT_FAMILY,
) -> SviResult:
    """
    Maximise the ELBO with Adam for a fixed number of epochs.

    Args:
        trajectory: Observed data
        variant: Model variant (must match the trajectory)
        pgabm_config: Relaxation constants
        hyper: Optimiser settings
        time_limit: Seconds before TimeLimitExceeded is raised (checked every epoch)
        family: Variational family

    Returns:
        SviResult with final lambda and per-epoch ELBO trace
    """
    variant = Variant.parse(variant)
    hyper = hyper or SviHyperparams()
    model = RelaxedModel(trajectory, pgabm_config)
    if model.variant != variant:
        raise ConfigurationError(f"Trajectory is {model.variant.value}, cannot fit {variant.value}")

    rng = np.random.default_rng(hyper.seed)
    lam = family.initial(initial_theta(variant, trajectory.config), hyper.init_log_scale)
    state = AdamState.zeros(lam.shape[0])
    trace = np.empty(hyper.n_epochs)
    batch_size = hyper.minibatch_events
    if batch_size is not None and batch_size >= model.n_events:
        batch_size = None

    logger.info(
        f"SVI on {variant.value}: M={model.dim}, {model.n_events} events, "
        f"{hyper.n_epochs} epochs, lr={hyper.learning_rate}"
    )
    start = time.monotonic()
    for epoch in range(hyper.n_epochs):
        if time_limit is not None and time.monotonic() - start >= time_limit:
            raise TimeLimitExceeded(time.monotonic() - start)

        noise = draw_noise(rng, hyper.elbo_samples_per_step, model)
        batch = None
        if batch_size is not None:
            batch = np.sort(rng.choice(model.n_events, size=batch_size, replace=False))

        density = _model_density(model, noise, batch)
        try:
            value, tape = ad.record(lambda l: monte_carlo_elbo(density, l, noise, family), lam)
            grad = ad.gradient(tape)
        except (NonFiniteSampleError, NonFiniteGradientError) as e:
            raise DivergenceError(epoch, str(e)) from e
        if not np.isfinite(value):
            raise DivergenceError(epoch, f"ELBO is {value}")

        trace[epoch] = value
        lam, state = adam_step(lam, -grad, state, hyper)

        if hyper.log_every and (epoch + 1) % hyper.log_every == 0:
            logger.debug(f"SVI epoch {epoch + 1}/{hyper.n_epochs}: ELBO {value:.4f}")

    elapsed = time.monotonic() - start
    logger.info(f"SVI finished in {elapsed:.1f}s, final ELBO {trace[-1]:.4f}")
    return SviResult(
        params=VariationalParams.from_vector(lam),
        elbo_trace=trace,
        n_epochs=hyper.n_epochs,
        wall_time=elapsed,
    )


def sample_posterior(
    lam: Union[VariationalParams, np.ndarray],
    variant: Union[Variant, str],
    config: ModelConfig,
    n: int = 200,
    seed: int = 0,
) -> PosteriorSamples:
    """Draw n thetas from the mean-field normal and map them to constrained space."""
    variant = Variant.parse(variant)
    params = lam if isinstance(lam, VariationalParams) else VariationalParams.from_vector(lam)
    expected = theta_dim(variant, config)
    if params.dim != expected:
        raise DimensionMismatchError("variational parameters", expected, params.dim)

    rng = np.random.default_rng(seed)
    thetas = params.mean + params.scale * rng.standard_normal((n, params.dim))
    samples: List = [transform(theta, variant, config) for theta in thetas]
    return PosteriorSamples(samples=samples, source=Method.SVI, thetas=thetas)
