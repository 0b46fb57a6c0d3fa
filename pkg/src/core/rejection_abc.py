"""
Rejection ABC baseline.

Every prior draw is simulated from scratch with its own seed and compared
to the observed trajectory through per-step counts of positive and
negative interactions. The closest half of the draws is accepted.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple, Union

import numpy as np

from core.abm_sim import simulate
from core.errors import ConfigurationError, DimensionMismatchError, TimeLimitExceeded
from models.inference import AbcHyperparams, ConstrainedParams, Method, PosteriorSamples, SummaryStats
from models.opinion import LatentParams, ModelConfig, Trajectory, Variant

logger = logging.getLogger(__name__)


def summarize(trajectory: Trajectory) -> SummaryStats:
    """Per-step counts of positive and negative outcomes."""
    n_steps = trajectory.config.n_steps
    steps = np.array([e.step for e in trajectory.events], dtype=int)
    plus = np.array([e.outcome.s_plus for e in trajectory.events], dtype=float)
    minus = np.array([e.outcome.s_minus for e in trajectory.events], dtype=float)
    return SummaryStats(
        pos_counts=np.bincount(steps, weights=plus, minlength=n_steps).astype(int),
        neg_counts=np.bincount(steps, weights=minus, minlength=n_steps).astype(int),
    )


def distance(a: SummaryStats, b: SummaryStats) -> float:
    """L2 distance between the concatenated (pos, neg) count vectors."""
    if a.pos_counts.shape != b.pos_counts.shape or a.neg_counts.shape != b.neg_counts.shape:
        raise DimensionMismatchError("summary statistics", a.pos_counts.shape, b.pos_counts.shape)
    diff = np.concatenate([a.pos_counts - b.pos_counts, a.neg_counts - b.neg_counts]).astype(float)
    return float(np.sqrt(diff @ diff))


def sample_prior(
    variant: Union[Variant, str],
    config: ModelConfig,
    rng: np.random.Generator,
    leader_fraction: float = 0.2,
) -> LatentParams:
    """
    Draw latents uniformly from the constrained boxes.

    BCM-S draws two values per threshold and assigns the more persuadable
    one to followers; roles are i.i.d. Bernoulli(leader_fraction).
    """
    variant = Variant.parse(variant)
    if variant == Variant.BCMS:
        eps_plus = np.sort(rng.uniform(0.0, 0.5, size=2))
        eps_minus = np.sort(rng.uniform(0.5, 1.0, size=2))
        roles = rng.random(config.n_agents) < leader_fraction
        return LatentParams(
            eps_plus=float(eps_plus[1]),
            eps_minus=float(eps_minus[0]),
            eps_plus_L=float(eps_plus[0]),
            eps_minus_L=float(eps_minus[1]),
            roles=tuple(bool(r) for r in roles),
        )

    eps_plus = float(rng.uniform(0.0, 0.5))
    eps_minus = float(rng.uniform(0.5, 1.0))
    if variant == Variant.BCMI:
        return LatentParams(eps_plus, eps_minus, k_attend=int(rng.integers(1, config.feed_len + 1)))
    if variant == Variant.BCMU:
        return LatentParams(eps_plus, eps_minus, beta=bool(rng.random() < 0.5))
    if variant == Variant.BCMG:
        return LatentParams(eps_plus, eps_minus, gamma=float(rng.uniform(0.0, 1.0)))
    return LatentParams(eps_plus, eps_minus)


def as_constrained(latents: LatentParams, variant: Variant, config: ModelConfig) -> ConstrainedParams:
    """Express hard latents in the probability form used by the other methods."""
    params = ConstrainedParams(
        variant=variant,
        eps_plus=latents.eps_plus,
        eps_minus=latents.eps_minus,
        eps_plus_L=latents.eps_plus_L,
        eps_minus_L=latents.eps_minus_L,
        gamma=latents.gamma,
    )
    if latents.roles is not None:
        params.phi_roles = np.array(latents.roles, dtype=float)
    if latents.k_attend is not None:
        params.phi_k = np.eye(config.feed_len)[latents.k_attend - 1]
    if latents.beta is not None:
        params.phi_beta = 1.0 if latents.beta else 0.0
    return params


def fit_abc(
    observed: Trajectory,
    variant: Union[Variant, str],
    hyper: Optional[AbcHyperparams] = None,
    time_limit: Optional[float] = None,
) -> PosteriorSamples:
    """
    Rejection ABC with the median distance as acceptance threshold.

    Prior draws and simulation seeds are generated sequentially from
    hyper.seed, so the result does not depend on hyper.parallelism.
    The simulator is pure Python and holds the GIL, so threads overlap only
    the numpy parts of each simulation and give little speedup.
    Exactly ceil(n_sims / 2) draws are accepted; ties go to the earlier draw.
    """
    variant = Variant.parse(variant)
    hyper = hyper or AbcHyperparams()
    if hyper.n_sims < 2:
        raise ConfigurationError(f"ABC needs n_sims >= 2, got {hyper.n_sims}")
    if observed.variant != variant:
        raise ConfigurationError(f"Trajectory is {observed.variant.value}, cannot fit {variant.value}")

    config = observed.config
    target = summarize(observed)
    rng = np.random.default_rng(hyper.seed)
    draws: List[Tuple[LatentParams, int]] = []
    for _ in range(hyper.n_sims):
        latents = sample_prior(variant, config, rng, hyper.leader_fraction)
        draws.append((latents, int(rng.integers(2**63))))

    logger.info(f"ABC on {variant.value}: {hyper.n_sims} simulations, parallelism {hyper.parallelism}")
    start = time.monotonic()

    def run_one(index: int) -> float:
        if time_limit is not None and time.monotonic() - start >= time_limit:
            raise TimeLimitExceeded(time.monotonic() - start)
        latents, seed = draws[index]
        return distance(target, summarize(simulate(config.with_seed(seed), latents)))

    if hyper.parallelism > 1:
        executor = ThreadPoolExecutor(max_workers=hyper.parallelism)
        try:
            distances = np.array(list(executor.map(run_one, range(hyper.n_sims))))
        finally:
            executor.shutdown(wait=True, cancel_futures=True)
    else:
        distances = np.array([run_one(i) for i in range(hyper.n_sims)])

    n_accept = math.ceil(hyper.n_sims / 2)
    accepted = np.sort(np.argsort(distances, kind="stable")[:n_accept])
    threshold = float(np.max(distances[accepted]))
    elapsed = time.monotonic() - start
    logger.info(f"ABC finished in {elapsed:.1f}s: accepted {n_accept}, threshold distance {threshold:.3f}")

    return PosteriorSamples(
        samples=[as_constrained(draws[i][0], variant, config) for i in accepted],
        source=Method.ABC,
        diagnostics={
            "threshold": threshold,
            "sim_indices": accepted,
            "distances": distances[accepted],
            "wall_time": elapsed,
        },
    )
