"""
Hamiltonian Monte Carlo in unconstrained space.

Fixed-length leapfrog trajectories with a Metropolis correction, identity
mass matrix, and dual-averaging step-size adaptation during burn-in.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from core import autodiff as ad
from core.errors import ConfigurationError, HmcTuningError, PoisonedValueError, TimeLimitExceeded
from core.pgabm import RelaxedModel, initial_theta, transform
from models.inference import HmcHyperparams, Method, PgabmConfig, PosteriorSamples
from models.opinion import Trajectory, Variant

logger = logging.getLogger(__name__)

MIN_ACCEPTANCE = 0.01

# Dual averaging constants
DA_GAMMA = 0.05
DA_T0 = 10.0
DA_KAPPA = 0.75

LogDensityAndGrad = Callable[[np.ndarray], Tuple[float, np.ndarray]]


def leapfrog(
    theta: np.ndarray,
    momentum: np.ndarray,
    step_size: float,
    n_steps: int,
    grad_fn: Callable[[np.ndarray], np.ndarray],
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integrate Hamiltonian dynamics for H = -log p(theta) + |momentum|^2 / 2.

    grad_fn returns the gradient of log p. Integration stops early when a
    non-finite value appears; callers treat that as a divergence.
    """
    theta = np.array(theta, dtype=float)
    momentum = np.array(momentum, dtype=float)
    momentum = momentum + 0.5 * step_size * grad_fn(theta)
    for i in range(n_steps):
        theta = theta + step_size * momentum
        grad = grad_fn(theta)
        if i < n_steps - 1:
            momentum = momentum + step_size * grad
        else:
            momentum = momentum + 0.5 * step_size * grad
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(momentum))):
            break
    return theta, momentum


@dataclass
class ChainResult:
    """Post burn-in draws of one chain."""

    draws: np.ndarray  # (n_samples, M)
    log_densities: np.ndarray
    accepted: np.ndarray
    step_size: float
    n_divergent: int = 0

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if len(self.accepted) else 0.0


class _DualAveraging:
    """Step-size adaptation towards a target acceptance probability."""

    def __init__(self, step_size: float, target: float):
        self.mu = np.log(10.0 * step_size)
        self.target = target
        self.h_bar = 0.0
        self.log_step = np.log(step_size)
        self.log_step_bar = 0.0
        self.m = 0

    def update(self, accept_prob: float) -> float:
        self.m += 1
        eta = 1.0 / (self.m + DA_T0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_prob)
        self.log_step = self.mu - np.sqrt(self.m) / DA_GAMMA * self.h_bar
        weight = self.m ** (-DA_KAPPA)
        self.log_step_bar = weight * self.log_step + (1.0 - weight) * self.log_step_bar
        return float(np.exp(self.log_step))

    @property
    def final_step(self) -> float:
        return float(np.exp(self.log_step_bar))


def _safe_eval(fn: LogDensityAndGrad, theta: np.ndarray) -> Tuple[float, np.ndarray]:
    try:
        value, grad = fn(theta)
    except (PoisonedValueError, FloatingPointError):
        return -np.inf, np.full_like(theta, np.nan)
    return float(value), np.asarray(grad, dtype=float)


def hmc_sample(
    log_density_and_grad: LogDensityAndGrad,
    theta0: np.ndarray,
    hyper: HmcHyperparams,
    time_limit: Optional[float] = None,
) -> ChainResult:
    """
    Run one HMC chain.

    Args:
        log_density_and_grad: theta -> (log p(theta), grad log p(theta))
        theta0: Starting point (must have finite log density)
        hyper: Sampler settings
        time_limit: Seconds before TimeLimitExceeded is raised (checked every iteration)

    Returns:
        ChainResult holding the post burn-in draws
    """
    rng = np.random.default_rng(hyper.seed)
    theta = np.array(theta0, dtype=float)
    log_p, grad = _safe_eval(log_density_and_grad, theta)
    if not np.isfinite(log_p):
        raise ConfigurationError("HMC starting point has a non-finite log density")

    step_size = hyper.step_size
    adapter = _DualAveraging(step_size, hyper.target_accept) if hyper.adapt_step_size else None
    n_total = hyper.n_burnin + hyper.n_samples
    draws = np.empty((hyper.n_samples, theta.shape[0]))
    log_densities = np.empty(hyper.n_samples)
    accepted = np.zeros(hyper.n_samples, dtype=bool)
    n_divergent = 0

    # leapfrog ends with an evaluation at the proposal; its log density is kept here
    cache = {}

    def grad_fn(x):
        value, g = _safe_eval(log_density_and_grad, x)
        cache["value"] = value
        return g

    start = time.monotonic()
    for it in range(n_total):
        if time_limit is not None and time.monotonic() - start >= time_limit:
            raise TimeLimitExceeded(time.monotonic() - start)

        momentum = rng.standard_normal(theta.shape[0])
        h0 = -log_p + 0.5 * momentum @ momentum
        proposal, p_new = leapfrog(theta, momentum, step_size, hyper.n_leapfrog, grad_fn)
        log_p_new = cache.get("value", -np.inf)

        divergent = not (np.isfinite(log_p_new) and np.all(np.isfinite(p_new)) and np.all(np.isfinite(proposal)))
        if divergent:
            accept_prob = 0.0
            n_divergent += 1
        else:
            h1 = -log_p_new + 0.5 * p_new @ p_new
            accept_prob = float(min(1.0, np.exp(min(0.0, h0 - h1))))

        is_accepted = rng.random() < accept_prob
        if is_accepted:
            theta, log_p = proposal, log_p_new

        if it < hyper.n_burnin:
            if adapter is not None:
                step_size = adapter.update(accept_prob)
                if it == hyper.n_burnin - 1:
                    step_size = adapter.final_step
                    logger.debug(f"HMC adapted step size: {step_size:.4g}")
        else:
            k = it - hyper.n_burnin
            draws[k] = theta
            log_densities[k] = log_p
            accepted[k] = is_accepted

        if hyper.log_every and (it + 1) % hyper.log_every == 0:
            logger.debug(f"HMC iteration {it + 1}/{n_total}: log p {log_p:.4f}, step {step_size:.4g}")

    chain = ChainResult(
        draws=draws,
        log_densities=log_densities,
        accepted=accepted,
        step_size=step_size,
        n_divergent=n_divergent,
    )
    if chain.acceptance_rate < MIN_ACCEPTANCE:
        raise HmcTuningError(chain.acceptance_rate)
    return chain


def fit_hmc(
    trajectory: Trajectory,
    variant: Union[Variant, str],
    pgabm_config: Optional[PgabmConfig] = None,
    hyper: Optional[HmcHyperparams] = None,
    time_limit: Optional[float] = None,
) -> PosteriorSamples:
    """
    Sample the relaxed posterior with HMC.

    BCM-S roles enter through their expected mixture (no Gumbel noise), so
    the target density is deterministic.
    """
    variant = Variant.parse(variant)
    hyper = hyper or HmcHyperparams()
    model = RelaxedModel(trajectory, pgabm_config)
    if model.variant != variant:
        raise ConfigurationError(f"Trajectory is {model.variant.value}, cannot fit {variant.value}")

    def log_density_and_grad(theta):
        return ad.value_and_grad(model.log_joint, theta)

    logger.info(
        f"HMC on {variant.value}: M={model.dim}, {hyper.n_burnin} burn-in + {hyper.n_samples} draws, "
        f"{hyper.n_leapfrog} leapfrog steps"
    )
    start = time.monotonic()
    chain = hmc_sample(log_density_and_grad, initial_theta(variant, trajectory.config), hyper, time_limit)
    elapsed = time.monotonic() - start
    logger.info(
        f"HMC finished in {elapsed:.1f}s: acceptance {chain.acceptance_rate:.3f}, "
        f"{chain.n_divergent} divergent, step {chain.step_size:.4g}"
    )

    samples = [transform(theta, variant, trajectory.config) for theta in chain.draws]
    return PosteriorSamples(
        samples=samples,
        source=Method.HMC,
        thetas=chain.draws,
        diagnostics={
            "acceptance_rate": chain.acceptance_rate,
            "step_size": chain.step_size,
            "n_divergent": chain.n_divergent,
            "chain": chain,
            "wall_time": elapsed,
        },
    )
