"""
Data models for opinion-dynamics simulations.
"""

from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.errors import ConfigurationError


class Variant(Enum):
    """Bounded-confidence model variants."""
    BCMB = "BCMb"  # base model with backfire
    BCMS = "BCMS"  # leader/follower roles
    BCMI = "BCMI"  # feed of F agents, attention depth K
    BCMU = "BCMU"  # backfire switch beta
    BCMG = "BCMG"  # link rewiring on an Erdos-Renyi graph

    @classmethod
    def parse(cls, value: "str | Variant") -> "Variant":
        if isinstance(value, Variant):
            return value
        for variant in cls:
            if variant.value.lower() == str(value).lower() or variant.name.lower() == str(value).lower():
                return variant
        raise ConfigurationError(f"Unknown variant: {value}")


class Dynamics(Enum):
    """Which rule an interaction followed (BCM-G only; everything else is UPDATE)."""
    UPDATE = "update"
    REWIRE = "rewire"


@dataclass(frozen=True)
class ModelConfig:
    """Observed parameters of a simulation."""

    variant: Variant
    n_agents: int
    n_steps: int
    interactions_per_step: int = 10
    mu_plus: float = 0.02
    mu_minus: float = 0.02

    # BCM-S leader rates; None means "same as followers"
    mu_plus_L: Optional[float] = None
    mu_minus_L: Optional[float] = None

    feed_len: Optional[int] = None  # BCM-I
    xi: Optional[float] = None  # BCM-G, probability of update dynamics
    graph_density: float = 0.1  # BCM-G
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        self.validate()

    @property
    def n_events(self) -> int:
        return self.n_steps * self.interactions_per_step

    @property
    def leader_mu_plus(self) -> float:
        return self.mu_plus if self.mu_plus_L is None else self.mu_plus_L

    @property
    def leader_mu_minus(self) -> float:
        return self.mu_minus if self.mu_minus_L is None else self.mu_minus_L

    def validate(self):
        """Raise ConfigurationError if any invariant is violated."""
        if self.n_agents < 2:
            raise ConfigurationError(f"n_agents must be >= 2, got {self.n_agents}")
        if self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.interactions_per_step < 1:
            raise ConfigurationError(f"interactions_per_step must be >= 1, got {self.interactions_per_step}")
        for name in ("mu_plus", "mu_minus", "mu_plus_L", "mu_minus_L"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {value}")

        if self.variant == Variant.BCMS:
            if self.leader_mu_plus > self.mu_plus or self.leader_mu_minus > self.mu_minus:
                raise ConfigurationError("BCM-S follower rates must dominate leader rates")
        if self.variant == Variant.BCMI:
            if self.feed_len is None or self.feed_len < 2:
                raise ConfigurationError(f"BCM-I needs feed_len >= 2, got {self.feed_len}")
            if self.n_agents < self.feed_len + 1:
                raise ConfigurationError(
                    f"BCM-I needs n_agents >= feed_len + 1 ({self.feed_len + 1}), got {self.n_agents}"
                )
        if self.variant == Variant.BCMG:
            if self.xi is None or not 0.0 <= self.xi <= 1.0:
                raise ConfigurationError(f"BCM-G needs xi in [0, 1], got {self.xi}")
            if not 0.0 < self.graph_density <= 1.0:
                raise ConfigurationError(f"graph_density must lie in (0, 1], got {self.graph_density}")

    def with_seed(self, seed: int) -> "ModelConfig":
        """Copy of this config with another seed."""
        values = self.to_dict()
        values["seed"] = seed
        return ModelConfig.from_dict(values)

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values["variant"] = self.variant.value
        return values

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "ModelConfig":
        return cls(**values)


@dataclass(frozen=True)
class LatentParams:
    """Ground-truth ABM parameters.

    For BCM-S, eps_plus / eps_minus are the follower thresholds and
    roles[u] is True when agent u is a leader.
    """

    eps_plus: float
    eps_minus: float
    eps_plus_L: Optional[float] = None
    eps_minus_L: Optional[float] = None
    roles: Optional[Tuple[bool, ...]] = None
    k_attend: Optional[int] = None
    beta: Optional[bool] = None
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.roles is not None:
            object.__setattr__(self, "roles", tuple(bool(r) for r in self.roles))
        if not 0.0 <= self.eps_plus <= 0.5:
            raise ConfigurationError(f"eps_plus must lie in [0, 0.5], got {self.eps_plus}")
        if not 0.5 <= self.eps_minus <= 1.0:
            raise ConfigurationError(f"eps_minus must lie in [0.5, 1], got {self.eps_minus}")

    def validate_for(self, config: ModelConfig):
        """Check the variant payload against a model configuration."""
        variant = config.variant
        payload = {
            "roles": self.roles is not None,
            "k_attend": self.k_attend is not None,
            "beta": self.beta is not None,
            "gamma": self.gamma is not None,
        }
        required = {
            Variant.BCMB: set(),
            Variant.BCMS: {"roles"},
            Variant.BCMI: {"k_attend"},
            Variant.BCMU: {"beta"},
            Variant.BCMG: {"gamma"},
        }[variant]
        present = {name for name, given in payload.items() if given}
        if present != required:
            raise ConfigurationError(
                f"Latent payload {sorted(present)} does not match variant {variant.value} "
                f"(expects {sorted(required)})"
            )

        if variant == Variant.BCMS:
            if self.eps_plus_L is None or self.eps_minus_L is None:
                raise ConfigurationError("BCM-S needs eps_plus_L and eps_minus_L")
            if not 0.0 <= self.eps_plus_L <= 0.5 or not 0.5 <= self.eps_minus_L <= 1.0:
                raise ConfigurationError("BCM-S leader thresholds out of range")
            if self.eps_plus < self.eps_plus_L or self.eps_minus > self.eps_minus_L:
                raise ConfigurationError("BCM-S followers must be more persuadable than leaders")
            if len(self.roles) != config.n_agents:
                raise ConfigurationError(
                    f"roles has {len(self.roles)} entries for {config.n_agents} agents"
                )
        elif self.eps_plus_L is not None or self.eps_minus_L is not None:
            raise ConfigurationError(f"Leader thresholds given for variant {variant.value}")

        if variant == Variant.BCMI and not 1 <= self.k_attend <= config.feed_len:
            raise ConfigurationError(f"k_attend must lie in [1, {config.feed_len}], got {self.k_attend}")
        if variant == Variant.BCMG and not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        if self.roles is not None:
            values["roles"] = list(self.roles)
        return {k: v for k, v in values.items() if v is not None}

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "LatentParams":
        values = dict(values)
        if values.get("roles") is not None:
            values["roles"] = tuple(values["roles"])
        return cls(**values)


@dataclass(frozen=True)
class Outcome:
    """Observed outcome of one interaction."""
    s_plus: bool = False
    s_minus: bool = False
    s_rewire: bool = False


@dataclass(frozen=True)
class InteractionEvent:
    """One observed interaction.

    participants is (u, v) for BCM-b/S/U, (u_1, ..., u_F, v) for BCM-I and
    (u, v) or (u, v, w, z) for BCM-G, where (w, z) is the edge swapped in a
    rewire that was actually applied. v is always the agent whose opinion
    may change.
    """

    step: int
    participants: Tuple[int, ...]
    outcome: Outcome
    dynamics: Dynamics = Dynamics.UPDATE


@dataclass(eq=False)
class Trajectory:
    """Fully observed simulation output, the data y."""

    config: ModelConfig
    x0: np.ndarray
    events: List[InteractionEvent] = field(default_factory=list)
    initial_edges: Optional[List[Tuple[int, int]]] = None
    truth: Optional[LatentParams] = None  # ground truth, when known

    @property
    def variant(self) -> Variant:
        return self.config.variant

    def target_of(self, event: InteractionEvent) -> int:
        """Agent updated by an event under this trajectory's variant."""
        if self.config.variant == Variant.BCMI:
            return event.participants[-1]
        return event.participants[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        same_edges = (self.initial_edges is None and other.initial_edges is None) or (
            self.initial_edges is not None
            and other.initial_edges is not None
            and [tuple(e) for e in self.initial_edges] == [tuple(e) for e in other.initial_edges]
        )
        return (
            self.config == other.config
            and self.x0.dtype == other.x0.dtype
            and self.x0.tobytes() == other.x0.tobytes()
            and self.events == other.events
            and same_edges
            and self.truth == other.truth
        )
