"""
Scoring of point estimates against ground truth.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from core.errors import ConfigurationError, DimensionMismatchError
from models.inference import ConstrainedParams, PosteriorSamples
from models.opinion import LatentParams, ModelConfig, Variant

logger = logging.getLogger(__name__)


def rmse(estimates: Sequence[float], truths: Sequence[float]) -> float:
    estimates = np.asarray(estimates, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if estimates.size == 0:
        raise ConfigurationError("rmse needs at least one value")
    if estimates.shape != truths.shape:
        raise DimensionMismatchError("rmse inputs", truths.shape, estimates.shape)
    return float(np.sqrt(np.mean((estimates - truths) ** 2)))


def role_error_rate(phi: Sequence[float], roles: Sequence[bool]) -> float:
    """Fraction of agents whose thresholded leader probability disagrees with the truth."""
    phi = np.asarray(phi, dtype=float)
    roles = np.asarray(roles, dtype=bool)
    if phi.shape != roles.shape:
        raise DimensionMismatchError("role estimates", roles.shape, phi.shape)
    return float(np.mean((phi > 0.5) != roles))


def relative_k_error(k_hat: int, k_true: int, feed_len: int) -> float:
    return abs(int(k_hat) - int(k_true)) / feed_len


def beta_error(phi_beta: float, beta_true: bool) -> float:
    """Probability-scale error |phi - 1[beta]|."""
    return abs(float(phi_beta) - (1.0 if beta_true else 0.0))


def posterior_mean(posterior: PosteriorSamples) -> ConstrainedParams:
    """Componentwise mean of the samples (probabilities are averaged as well)."""
    if not posterior.samples:
        raise ConfigurationError("Cannot average an empty posterior")
    first = posterior.samples[0]

    def mean_of(name: str):
        if getattr(first, name) is None:
            return None
        values = np.array([np.asarray(getattr(s, name), dtype=float) for s in posterior.samples])
        mean = values.mean(axis=0)
        return float(mean) if mean.ndim == 0 else mean

    return ConstrainedParams(
        variant=first.variant,
        eps_plus=mean_of("eps_plus"),
        eps_minus=mean_of("eps_minus"),
        eps_plus_L=mean_of("eps_plus_L"),
        eps_minus_L=mean_of("eps_minus_L"),
        phi_roles=mean_of("phi_roles"),
        phi_k=mean_of("phi_k"),
        phi_beta=mean_of("phi_beta"),
        gamma=mean_of("gamma"),
    )


@dataclass
class ParamScore:
    """Error of one estimated parameter."""
    name: str
    truth: Optional[float]
    estimate: Optional[float]
    error: Optional[float]


THRESHOLDS = ("eps_plus", "eps_minus", "eps_plus_L", "eps_minus_L")


def score(truth: LatentParams, estimate: ConstrainedParams, config: ModelConfig) -> List[ParamScore]:
    """
    Per-parameter errors of a point estimate.

    Thresholds and gamma are scored by absolute error, with an extra
    eps_rmse entry over all thresholds. Roles report leader fractions and
    the role error rate, K the estimated depth and |K_hat - K| / F, beta the
    probability phi and its probability-scale error.
    """
    scores: List[ParamScore] = []
    eps_truth, eps_est = [], []
    for name in THRESHOLDS:
        true_value = getattr(truth, name)
        if true_value is None:
            continue
        value = float(getattr(estimate, name))
        eps_truth.append(true_value)
        eps_est.append(value)
        scores.append(ParamScore(name, float(true_value), value, abs(value - true_value)))
    scores.append(ParamScore("eps_rmse", None, None, rmse(eps_est, eps_truth)))

    variant = config.variant
    if variant == Variant.BCMS:
        phi = np.asarray(estimate.phi_roles, dtype=float)
        scores.append(ParamScore(
            "roles",
            float(np.mean(truth.roles)),
            float(np.mean(phi > 0.5)),
            role_error_rate(phi, truth.roles),
        ))
    elif variant == Variant.BCMI:
        k_hat = estimate.k_hat()
        scores.append(ParamScore(
            "k_attend",
            float(truth.k_attend),
            float(k_hat),
            relative_k_error(k_hat, truth.k_attend, config.feed_len),
        ))
    elif variant == Variant.BCMU:
        phi = float(estimate.phi_beta)
        scores.append(ParamScore("beta", 1.0 if truth.beta else 0.0, phi, beta_error(phi, truth.beta)))
    elif variant == Variant.BCMG:
        value = float(estimate.gamma)
        scores.append(ParamScore("gamma", truth.gamma, value, abs(value - truth.gamma)))
    return scores


def aggregate_errors(results: pd.DataFrame, axis: str, value: str = "error") -> pd.DataFrame:
    """
    Mean and standard error of a column grouped by one grid axis.

    Returns columns (variant, method, param_name, <axis>, mean_<value>, se_<value>, n).
    """
    keys = ["variant", "method", "param_name", axis]
    frame = results[results["status"] == "ok"].dropna(subset=[axis, value])
    grouped = frame.groupby(keys, sort=True)[value]
    out = grouped.agg(["mean", "std", "count"]).reset_index()
    out["std"] = out["std"].fillna(0.0)
    out[f"se_{value}"] = out["std"] / np.sqrt(out["count"])
    out = out.rename(columns={"mean": f"mean_{value}", "count": "n"})
    return out[keys + [f"mean_{value}", f"se_{value}", "n"]]


def unscored(truth: LatentParams, config: ModelConfig) -> List[ParamScore]:
    """Score entries, without estimates, for a run that did not finish."""
    scores = [
        ParamScore(name, float(getattr(truth, name)), None, None)
        for name in THRESHOLDS
        if getattr(truth, name) is not None
    ]
    scores.append(ParamScore("eps_rmse", None, None, None))
    variant = config.variant
    if variant == Variant.BCMS:
        scores.append(ParamScore("roles", float(np.mean(truth.roles)), None, None))
    elif variant == Variant.BCMI:
        scores.append(ParamScore("k_attend", float(truth.k_attend), None, None))
    elif variant == Variant.BCMU:
        scores.append(ParamScore("beta", 1.0 if truth.beta else 0.0, None, None))
    elif variant == Variant.BCMG:
        scores.append(ParamScore("gamma", truth.gamma, None, None))
    return scores
