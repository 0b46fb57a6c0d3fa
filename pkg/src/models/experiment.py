"""
Data models for experiment grids and their results.
"""

from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from core.errors import ConfigurationError
from models.inference import ConstrainedParams, Method
from models.opinion import LatentParams, Variant


SPEC_VERSION = 1

# Axis name -> ModelConfig / cell attribute
GRID_AXES = ("T", "N", "F", "xi", "leader_frac", "mu")
LATENT_AXES = ("eps_plus", "eps_minus", "eps_plus_L", "eps_minus_L", "k_attend", "beta", "gamma")

RESULT_COLUMNS = (
    "variant", "method", "seed", "T", "N", "F", "xi", "leader_frac", "mu",
    "param_name", "truth", "estimate", "error", "wall_time_s", "status",
)


class RunStatus(Enum):
    """Outcome of one method on one cell."""
    OK = "ok"
    TIMEOUT = "timeout"
    FAILED = "failed"


@dataclass
class ExperimentSpec:
    """A grid of experiments, loaded from a versioned YAML file."""

    variant: Variant
    axes: Dict[str, List[Any]]
    methods: List[Method]
    latents: Dict[str, List[Any]] = field(default_factory=dict)  # fixed latent axes; absent -> sampled
    replicates: int = 1
    time_limit_seconds: float = 10800.0
    output_dir: Path = Path("results")
    master_seed: int = 0
    parallelism: int = 1
    record_wall_time: bool = True
    interactions_per_step: int = 10
    graph_density: float = 0.1  # BCM-G initial graph
    rewire_retries: int = 100
    svi: Dict[str, Any] = field(default_factory=dict)  # SviHyperparams overrides
    hmc: Dict[str, Any] = field(default_factory=dict)
    abc: Dict[str, Any] = field(default_factory=dict)
    spec_version: int = SPEC_VERSION

    def __post_init__(self):
        self.variant = Variant.parse(self.variant)
        self.methods = [Method.parse(m) for m in self.methods]
        self.output_dir = Path(self.output_dir)
        self.validate()

    def validate(self):
        if self.spec_version != SPEC_VERSION:
            raise ConfigurationError(f"Unsupported spec_version {self.spec_version} (expected {SPEC_VERSION})")
        if not self.methods:
            raise ConfigurationError("Experiment spec needs at least one method")
        if self.replicates < 1:
            raise ConfigurationError(f"replicates must be >= 1, got {self.replicates}")
        if not 0.0 < self.graph_density <= 1.0:
            raise ConfigurationError(f"graph_density must lie in (0, 1], got {self.graph_density}")
        if self.rewire_retries < 1:
            raise ConfigurationError(f"rewire_retries must be >= 1, got {self.rewire_retries}")
        for name, values in self.axes.items():
            if name not in GRID_AXES:
                raise ConfigurationError(f"Unknown grid axis '{name}' (known: {', '.join(GRID_AXES)})")
            if not isinstance(values, list) or not values:
                raise ConfigurationError(f"Grid axis '{name}' must be a non-empty list")
        for required in ("T", "N"):
            if required not in self.axes:
                raise ConfigurationError(f"Grid axis '{required}' is required")
        if self.variant == Variant.BCMI and "F" not in self.axes:
            raise ConfigurationError("BCM-I grids need an 'F' axis")
        if self.variant == Variant.BCMG and "xi" not in self.axes:
            raise ConfigurationError("BCM-G grids need an 'xi' axis")
        for name, values in self.latents.items():
            if name not in LATENT_AXES:
                raise ConfigurationError(f"Unknown latent axis '{name}' (known: {', '.join(LATENT_AXES)})")
            if values != "sample" and (not isinstance(values, list) or not values):
                raise ConfigurationError(f"Latent axis '{name}' must be a non-empty list or 'sample'")


@dataclass(frozen=True)
class ExperimentCell:
    """One grid point and replicate."""

    variant: Variant
    n_steps: int
    n_agents: int
    replicate: int
    seed: int
    feed_len: Optional[int] = None
    xi: Optional[float] = None
    leader_frac: Optional[float] = None
    mu: float = 0.02
    interactions_per_step: int = 10
    graph_density: float = 0.1
    rewire_retries: int = 100
    latents: Tuple[Tuple[str, Any], ...] = ()  # fixed latent values for this cell

    @property
    def key(self) -> str:
        """Stable identifier used for resumption and ordering."""
        parts = [
            self.variant.value,
            f"T={self.n_steps}",
            f"N={self.n_agents}",
            f"F={self.feed_len}",
            f"xi={self.xi}",
            f"lf={self.leader_frac}",
            f"mu={self.mu}",
            f"gd={self.graph_density}",
        ]
        parts += [f"{name}={value}" for name, value in self.latents]
        parts.append(f"rep={self.replicate}")
        return "|".join(parts)


@dataclass
class ResultRow:
    """One line of the results CSV."""

    variant: str
    method: str
    seed: int
    T: int
    N: int
    F: Optional[int]
    xi: Optional[float]
    leader_frac: Optional[float]
    mu: float
    param_name: str
    truth: Optional[float]
    estimate: Optional[float]
    error: Optional[float]
    wall_time_s: float
    status: str

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ExperimentResult:
    """Scores of one method on one cell."""

    variant: Variant
    ground_truth: LatentParams
    method: Method
    posterior_mean: Optional[ConstrainedParams]
    errors: Dict[str, float]
    wall_time: float
    status: RunStatus
    rows: List[ResultRow] = field(default_factory=list)
    message: str = ""
