"""
Data models for the relaxed generative model and the inference methods.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

from core.errors import ConfigurationError
from models.opinion import Variant


class Method(Enum):
    """Inference methods."""
    SVI = "svi"
    HMC = "hmc"  # reported as MCMC
    ABC = "abc"

    @classmethod
    def parse(cls, value: "str | Method") -> "Method":
        if isinstance(value, Method):
            return value
        lowered = str(value).lower()
        if lowered == "mcmc":
            return cls.HMC
        for method in cls:
            if method.value == lowered:
                return method
        raise ConfigurationError(f"Unknown method: {value}")


@dataclass(frozen=True)
class PgabmConfig:
    """Relaxation constants of the generative model."""

    rho: float = 32.0  # sigmoid steepness
    tau: float = 0.1  # Gumbel-Softmax temperature
    prob_floor: float = 1e-12

    def __post_init__(self):
        if self.rho <= 0:
            raise ConfigurationError(f"rho must be > 0, got {self.rho}")
        if self.tau <= 0:
            raise ConfigurationError(f"tau must be > 0, got {self.tau}")

    @classmethod
    def from_config(cls, config) -> "PgabmConfig":
        return cls(
            rho=float(config.get("pgabm.rho", 32.0)),
            tau=float(config.get("pgabm.tau", 0.1)),
            prob_floor=float(config.get("pgabm.prob_floor", 1e-12)),
        )


@dataclass
class ConstrainedParams:
    """Parameters in their natural domains.

    Discrete latents are replaced by probabilities: phi_roles[u] is the
    probability that agent u is a leader, phi_k[j] the (normalised) weight
    of K = j + 1, phi_beta the probability that beta = 1. Field values are
    floats / arrays, or autodiff variables while a density is recorded.
    """

    variant: Variant
    eps_plus: Any
    eps_minus: Any
    eps_plus_L: Any = None
    eps_minus_L: Any = None
    phi_roles: Any = None
    phi_k: Any = None
    phi_beta: Any = None
    gamma: Any = None

    def roles_hat(self) -> Optional[np.ndarray]:
        """Role point estimate: leader iff phi > 0.5."""
        if self.phi_roles is None:
            return None
        return np.asarray(self.phi_roles) > 0.5

    def k_hat(self) -> Optional[int]:
        """Attention depth point estimate: argmax of the K weights."""
        if self.phi_k is None:
            return None
        return int(np.argmax(np.asarray(self.phi_k))) + 1

    def named_values(self) -> Dict[str, float]:
        """Flat name -> value mapping used for CSV export."""
        values = {"eps_plus": float(self.eps_plus), "eps_minus": float(self.eps_minus)}
        if self.eps_plus_L is not None:
            values["eps_plus_L"] = float(self.eps_plus_L)
            values["eps_minus_L"] = float(self.eps_minus_L)
        if self.phi_roles is not None:
            for u, phi in enumerate(np.asarray(self.phi_roles, dtype=float)):
                values[f"phi_role_{u}"] = float(phi)
        if self.phi_k is not None:
            for j, phi in enumerate(np.asarray(self.phi_k, dtype=float)):
                values[f"phi_k_{j + 1}"] = float(phi)
        if self.phi_beta is not None:
            values["phi_beta"] = float(self.phi_beta)
        if self.gamma is not None:
            values["gamma"] = float(self.gamma)
        return values


@dataclass
class VariationalParams:
    """Mean-field normal parameters lambda = (mean, log_scale)."""

    mean: np.ndarray
    log_scale: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.log_scale = np.asarray(self.log_scale, dtype=float)
        if self.mean.shape != self.log_scale.shape or self.mean.ndim != 1:
            raise ConfigurationError(
                f"mean and log_scale must be equal-length vectors, got {self.mean.shape} and {self.log_scale.shape}"
            )
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.log_scale))):
            raise ConfigurationError("Variational parameters must be finite")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.mean, self.log_scale])

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "VariationalParams":
        vector = np.asarray(vector, dtype=float)
        dim = vector.shape[0] // 2
        return cls(mean=vector[:dim].copy(), log_scale=vector[dim:].copy())


@dataclass(frozen=True)
class SviHyperparams:
    """Stochastic variational inference settings."""

    learning_rate: float = 0.01
    n_epochs: int = 20000
    elbo_samples_per_step: int = 1
    minibatch_events: Optional[int] = None
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    init_log_scale: float = -2.0
    n_posterior_samples: int = 200
    log_every: int = 1000

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.n_epochs < 1 or self.elbo_samples_per_step < 1:
            raise ConfigurationError("n_epochs and elbo_samples_per_step must be positive")
        if self.minibatch_events is not None and self.minibatch_events < 1:
            raise ConfigurationError(f"minibatch_events must be positive, got {self.minibatch_events}")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ConfigurationError("Adam betas must lie in (0, 1)")

    @classmethod
    def from_config(cls, config, **overrides) -> "SviHyperparams":
        values = dict(
            learning_rate=float(config.get("svi.learning_rate", 0.01)),
            n_epochs=int(config.get("svi.n_epochs", 20000)),
            elbo_samples_per_step=int(config.get("svi.elbo_samples_per_step", 1)),
            minibatch_events=config.get("svi.minibatch_events"),
            adam_beta1=float(config.get("svi.adam_beta1", 0.9)),
            adam_beta2=float(config.get("svi.adam_beta2", 0.999)),
            adam_eps=float(config.get("svi.adam_eps", 1e-8)),
            init_log_scale=float(config.get("svi.init_log_scale", -2.0)),
            n_posterior_samples=int(config.get("svi.n_posterior_samples", 200)),
            log_every=int(config.get("svi.log_every", 1000)),
        )
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class HmcHyperparams:
    """Hamiltonian Monte Carlo settings."""

    step_size: float = 0.05
    n_leapfrog: int = 10
    n_burnin: int = 5000
    n_samples: int = 5000
    seed: int = 0
    target_accept: float = 0.8
    adapt_step_size: bool = True
    log_every: int = 500

    def __post_init__(self):
        if self.step_size <= 0 or self.n_leapfrog < 1 or self.n_samples < 1 or self.n_burnin < 0:
            raise ConfigurationError("HMC step_size, n_leapfrog and n_samples must be positive")
        if not 0 < self.target_accept < 1:
            raise ConfigurationError(f"target_accept must lie in (0, 1), got {self.target_accept}")

    @classmethod
    def from_config(cls, config, **overrides) -> "HmcHyperparams":
        values = dict(
            step_size=float(config.get("hmc.step_size", 0.05)),
            n_leapfrog=int(config.get("hmc.n_leapfrog", 10)),
            n_burnin=int(config.get("hmc.n_burnin", 5000)),
            n_samples=int(config.get("hmc.n_samples", 5000)),
            target_accept=float(config.get("hmc.target_accept", 0.8)),
            log_every=int(config.get("hmc.log_every", 500)),
        )
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class AbcHyperparams:
    """Rejection ABC settings."""

    n_sims: int = 10000
    seed: int = 0
    leader_fraction: float = 0.2  # BCM-S role prior
    parallelism: int = 1  # simulation threads; the simulator holds the GIL

    def __post_init__(self):
        if self.n_sims < 2:
            raise ConfigurationError(f"ABC needs n_sims >= 2, got {self.n_sims}")
        if self.parallelism < 1:
            raise ConfigurationError(f"ABC parallelism must be >= 1, got {self.parallelism}")

    @classmethod
    def from_config(cls, config, **overrides) -> "AbcHyperparams":
        values = dict(
            n_sims=int(config.get("abc.n_sims", 10000)),
            leader_fraction=float(config.get("abc.leader_fraction", 0.2)),
            parallelism=int(config.get("experiment.parallelism", 1)),
        )
        values.update(overrides)
        return cls(**values)


@dataclass
class PosteriorSamples:
    """Draws from a posterior approximation, in constrained space."""

    samples: List[ConstrainedParams]
    source: Method
    thetas: Optional[np.ndarray] = None  # unconstrained draws, when the method has them
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class SummaryStats:
    """Per-step counts of positive and negative interactions."""

    pos_counts: np.ndarray
    neg_counts: np.ndarray


@dataclass
class SviResult:
    """Output of a variational fit."""

    params: VariationalParams
    elbo_trace: np.ndarray
    n_epochs: int = 0
    wall_time: float = 0.0
