"""
Forward simulators for the bounded-confidence model with backfire and its
four extensions (roles, feed attention, backfire switch, link rewiring).

Randomness is fully determined by ModelConfig.seed:
- the setup stream (spawn key (0,)) draws x0 and the initial graph;
- every time step t draws its interactions from its own stream (1, t).
Both are PCG64 generators built from a numpy SeedSequence, so trajectories
are identical across platforms and numpy versions that keep PCG64 stable.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from core.errors import ConfigurationError, InfeasibleRewireError
from models.opinion import (
    Dynamics,
    InteractionEvent,
    LatentParams,
    ModelConfig,
    Outcome,
    Trajectory,
    Variant,
)

logger = logging.getLogger(__name__)


EPS_PLUS_GRID = (0.05, 0.15, 0.25, 0.35, 0.45)
EPS_MINUS_GRID = (0.55, 0.65, 0.75, 0.85, 0.95)
GAMMA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

DEFAULT_REWIRE_RETRIES = 100
MAX_GRAPH_ATTEMPTS = 1000

Edge = Tuple[int, int]


# === Random streams ===

def setup_rng(seed: int) -> np.random.Generator:
    """Stream used for x0 and the initial graph."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(0,))))


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Stream used for the interactions of one time step."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(1, step))))


# === Single interaction ===

def clamp(value: float) -> float:
    return max(0.0, min(value, 1.0))


def feed_delta(x: np.ndarray, feed: Sequence[int], k_attend: int, v: int) -> float:
    """Gap between the mean of the first k feed opinions and x_v."""
    return float(np.mean(x[list(feed[:k_attend])])) - float(x[v])


def apply_outcome(x_v: float, delta: float, outcome: Outcome, mu_plus: float, mu_minus: float) -> float:
    """Opinion of v after an update interaction with the given outcome, clamped."""
    if outcome.s_plus:
        return clamp(x_v + mu_plus * delta)
    if outcome.s_minus:
        return clamp(x_v - mu_minus * delta)
    return x_v


def rates_for(v: int, latents: LatentParams, config: ModelConfig) -> Tuple[float, float, float, float]:
    """(eps_plus, eps_minus, mu_plus, mu_minus) that govern updates of agent v."""
    if config.variant == Variant.BCMS and latents.roles[v]:
        return latents.eps_plus_L, latents.eps_minus_L, config.leader_mu_plus, config.leader_mu_minus
    return latents.eps_plus, latents.eps_minus, config.mu_plus, config.mu_minus


def step_update(
    x: np.ndarray,
    participants: Sequence[int],
    latents: LatentParams,
    config: ModelConfig,
    inplace: bool = False,
) -> Tuple[Outcome, np.ndarray]:
    """
    Apply one update interaction.

    Args:
        x: Current opinions, all in [0, 1]
        participants: (u, v), or (u_1, ..., u_F, v) for BCM-I
        latents: Threshold parameters and variant payload
        config: Model configuration (rates, variant)
        inplace: Modify x instead of returning a copy

    Returns:
        (outcome, opinions after the interaction)
    """
    if config.variant == Variant.BCMI:
        v = participants[-1]
        delta = feed_delta(x, participants[:-1], latents.k_attend, v)
    else:
        u, v = participants[0], participants[1]
        delta = float(x[u]) - float(x[v])

    eps_plus, eps_minus, mu_plus, mu_minus = rates_for(v, latents, config)
    gap = abs(delta)
    if gap <= eps_plus:
        outcome = Outcome(s_plus=True)
    elif gap >= eps_minus:
        outcome = Outcome(s_minus=True)
    else:
        outcome = Outcome()

    if config.variant == Variant.BCMU and not latents.beta:
        mu_minus = 0.0

    out = x if inplace else x.copy()
    out[v] = apply_outcome(float(x[v]), delta, outcome, mu_plus, mu_minus)
    return outcome, out


# === Graph rule ===

def _normalize(a: int, b: int) -> Edge:
    return (a, b) if a < b else (b, a)


def init_graph(n_agents: int, graph_density: float, seed: Union[int, np.random.Generator]) -> List[Edge]:
    """
    Sample a connected Erdos-Renyi graph.

    Each unordered pair is included independently with probability
    graph_density; disconnected draws are discarded and re-sampled.

    Returns:
        Sorted list of (a, b) edges with a < b
    """
    if n_agents < 2:
        raise ConfigurationError(f"A graph needs at least 2 agents, got {n_agents}")
    if not 0.0 < graph_density <= 1.0:
        raise ConfigurationError(f"graph_density must lie in (0, 1], got {graph_density}")

    rng = seed if isinstance(seed, np.random.Generator) else setup_rng(seed)
    for attempt in range(MAX_GRAPH_ATTEMPTS):
        graph = nx.gnp_random_graph(n_agents, graph_density, seed=int(rng.integers(2**32)))
        if nx.is_connected(graph):
            if attempt:
                logger.debug(f"Connected graph found after {attempt + 1} draws")
            return sorted(_normalize(a, b) for a, b in graph.edges())

    raise ConfigurationError(
        f"No connected graph in {MAX_GRAPH_ATTEMPTS} draws (N={n_agents}, density={graph_density})"
    )


def rewire(edges: Sequence[Edge], uv: Edge, wz: Edge) -> List[Edge]:
    """
    Swap (u, v), (w, z) for (u, z), (w, v).

    Degrees and edge count are preserved. Raises ConfigurationError when the
    swap is not admissible.
    """
    u, v = uv
    w, z = wz
    existing = {_normalize(a, b) for a, b in edges}
    if len({u, v, w, z}) != 4:
        raise ConfigurationError(f"Rewiring needs four distinct agents, got {uv} and {wz}")
    if _normalize(u, v) not in existing or _normalize(w, z) not in existing:
        raise ConfigurationError(f"Both {uv} and {wz} must be existing edges")
    if _normalize(u, z) in existing or _normalize(w, v) in existing:
        raise ConfigurationError(f"Rewiring {uv} with {wz} would duplicate an edge")

    existing -= {_normalize(u, v), _normalize(w, z)}
    existing |= {_normalize(u, z), _normalize(w, v)}
    return sorted(existing)


class _EdgeSet:
    """Edges in a list (for uniform sampling) mirrored by an nx.Graph (for connectivity)."""

    def __init__(self, n_agents: int, edges: Sequence[Edge]):
        self.graph = nx.Graph()
        self.graph.add_nodes_from(range(n_agents))
        self.edges: List[Edge] = []
        self._position: Dict[Edge, int] = {}
        for a, b in edges:
            self.add(a, b)

    def __len__(self) -> int:
        return len(self.edges)

    def add(self, a: int, b: int):
        edge = _normalize(a, b)
        self._position[edge] = len(self.edges)
        self.edges.append(edge)
        self.graph.add_edge(*edge)

    def remove(self, a: int, b: int):
        edge = _normalize(a, b)
        index = self._position.pop(edge)
        last = self.edges.pop()
        if index < len(self.edges):
            self.edges[index] = last
            self._position[last] = index
        self.graph.remove_edge(*edge)

    def has(self, a: int, b: int) -> bool:
        return _normalize(a, b) in self._position

    def sample_oriented(self, rng: np.random.Generator) -> Edge:
        a, b = self.edges[int(rng.integers(len(self.edges)))]
        return (a, b) if rng.random() < 0.5 else (b, a)

    def try_rewire(self, u: int, v: int, rng: np.random.Generator, retries: int) -> Optional[Edge]:
        """Apply a connectivity-preserving swap of (u, v); return (w, z) or None."""
        for _ in range(retries):
            w, z = self.sample_oriented(rng)
            if len({u, v, w, z}) != 4 or self.has(u, z) or self.has(w, v):
                continue
            self.remove(u, v)
            self.remove(w, z)
            self.add(u, z)
            self.add(w, v)
            if nx.is_connected(self.graph):
                return (w, z)
            self.remove(u, z)
            self.remove(w, v)
            self.add(u, v)
            self.add(w, z)
        return None

    def degrees(self) -> np.ndarray:
        return np.array([d for _, d in sorted(self.graph.degree())])


# === Simulation ===

def sample_latents(
    variant: Union[Variant, str],
    config: ModelConfig,
    rng: np.random.Generator,
    leader_fraction: float = 0.2,
) -> LatentParams:
    """Draw ground-truth parameters from the experiment grids."""
    variant = Variant.parse(variant)
    if variant == Variant.BCMS:
        eps_plus = sorted(rng.choice(EPS_PLUS_GRID, size=2))
        eps_minus = sorted(rng.choice(EPS_MINUS_GRID, size=2))
        n_leaders = max(1, int(round(leader_fraction * config.n_agents)))
        leaders = set(rng.choice(config.n_agents, size=n_leaders, replace=False).tolist())
        return LatentParams(
            eps_plus=float(eps_plus[1]),
            eps_minus=float(eps_minus[0]),
            eps_plus_L=float(eps_plus[0]),
            eps_minus_L=float(eps_minus[1]),
            roles=tuple(u in leaders for u in range(config.n_agents)),
        )

    eps_plus = float(rng.choice(EPS_PLUS_GRID))
    eps_minus = float(rng.choice(EPS_MINUS_GRID))
    if variant == Variant.BCMI:
        return LatentParams(eps_plus, eps_minus, k_attend=int(rng.integers(1, config.feed_len + 1)))
    if variant == Variant.BCMU:
        return LatentParams(eps_plus, eps_minus, beta=bool(rng.random() < 0.5))
    if variant == Variant.BCMG:
        return LatentParams(eps_plus, eps_minus, gamma=float(rng.choice(GAMMA_GRID)))
    return LatentParams(eps_plus, eps_minus)


class Simulator:
    """
    Runs one simulation and keeps its internal state for inspection.

    After run(), `opinions` holds the final opinions, `edge_set` the final
    graph (BCM-G) and `history` the opinions after every event when
    record_history is set.
    """

    def __init__(
        self,
        config: ModelConfig,
        latents: LatentParams,
        record_history: bool = False,
        rewire_retries: int = DEFAULT_REWIRE_RETRIES,
    ):
        latents.validate_for(config)
        self.config = config
        self.latents = latents
        self.record_history = record_history
        self.rewire_retries = rewire_retries

        self.opinions: Optional[np.ndarray] = None
        self.edge_set: Optional[_EdgeSet] = None
        self.history: List[np.ndarray] = []
        self.skipped_rewires = 0

    def _draw_participants(self, rng: np.random.Generator) -> Tuple[int, ...]:
        config = self.config
        if config.variant == Variant.BCMI:
            agents = rng.choice(config.n_agents, size=config.feed_len + 1, replace=False)
        else:
            agents = rng.choice(config.n_agents, size=2, replace=False)
        return tuple(int(a) for a in agents)

    def _graph_event(self, step: int, rng: np.random.Generator) -> InteractionEvent:
        u, v = self.edge_set.sample_oriented(rng)
        h = rng.random()
        if h < self.config.xi:
            outcome, _ = step_update(self.opinions, (u, v), self.latents, self.config, inplace=True)
            return InteractionEvent(step, (u, v), outcome, Dynamics.UPDATE)

        if abs(float(self.opinions[u]) - float(self.opinions[v])) <= self.latents.gamma:
            return InteractionEvent(step, (u, v), Outcome(), Dynamics.REWIRE)

        wz = self.edge_set.try_rewire(u, v, rng, self.rewire_retries)
        if wz is None:
            self.skipped_rewires += 1
            logger.debug(f"Step {step}: no admissible rewiring partner for ({u}, {v}), graph unchanged")
            return InteractionEvent(step, (u, v), Outcome(s_rewire=True), Dynamics.REWIRE)
        return InteractionEvent(step, (u, v) + wz, Outcome(s_rewire=True), Dynamics.REWIRE)

    def run(self) -> Trajectory:
        config = self.config
        rng = setup_rng(config.seed)
        x0 = rng.random(config.n_agents)
        self.opinions = x0.copy()
        self.history = []
        self.skipped_rewires = 0

        initial_edges = None
        if config.variant == Variant.BCMG:
            initial_edges = init_graph(config.n_agents, config.graph_density, rng)
            if len(initial_edges) < 2:
                raise InfeasibleRewireError(len(initial_edges))
            self.edge_set = _EdgeSet(config.n_agents, initial_edges)

        logger.debug(
            f"Simulating {config.variant.value}: N={config.n_agents}, T={config.n_steps}, "
            f"{config.interactions_per_step} interactions/step, seed={config.seed}"
        )

        events: List[InteractionEvent] = []
        for step in range(config.n_steps):
            rng = step_rng(config.seed, step)
            for _ in range(config.interactions_per_step):
                if config.variant == Variant.BCMG:
                    event = self._graph_event(step, rng)
                else:
                    participants = self._draw_participants(rng)
                    outcome, _ = step_update(self.opinions, participants, self.latents, config, inplace=True)
                    event = InteractionEvent(step, participants, outcome)
                events.append(event)
                if self.record_history:
                    self.history.append(self.opinions.copy())

        if self.skipped_rewires:
            logger.warning(f"{self.skipped_rewires} rewires skipped for lack of an admissible partner")
        logger.debug(f"Simulation finished: {len(events)} events")

        return Trajectory(
            config=config,
            x0=x0,
            events=events,
            initial_edges=initial_edges,
            truth=self.latents,
        )


def simulate(
    config: ModelConfig,
    latents: LatentParams,
    rewire_retries: int = DEFAULT_REWIRE_RETRIES,
) -> Trajectory:
    """Simulate a full trajectory; identical inputs give identical outputs."""
    return Simulator(config, latents, rewire_retries=rewire_retries).run()
