"""
Line-delimited JSON trajectory files.

The first line is a header with the model configuration, the initial
opinions, the initial graph (BCM-G) and, when known, the ground truth.
Every following line is one interaction event. Floats are written with
their shortest round-trip repr, so reading a file back is bit-exact.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterator, Union

import numpy as np

from core.errors import BCMInferError, ConfigurationError
from models.opinion import Dynamics, InteractionEvent, LatentParams, ModelConfig, Outcome, Trajectory

logger = logging.getLogger(__name__)

HEADER = "header"
EVENT = "event"


def _header(trajectory: Trajectory) -> Dict[str, Any]:
    return {
        "type": HEADER,
        "config": trajectory.config.to_dict(),
        "x0": [float(x) for x in trajectory.x0],
        "initial_edges": (
            None if trajectory.initial_edges is None
            else [[int(a), int(b)] for a, b in trajectory.initial_edges]
        ),
        "truth": None if trajectory.truth is None else trajectory.truth.to_dict(),
    }


def _event_record(event: InteractionEvent) -> Dict[str, Any]:
    return {
        "type": EVENT,
        "step": event.step,
        "participants": [int(p) for p in event.participants],
        "d": event.dynamics.value,
        "s_plus": event.outcome.s_plus,
        "s_minus": event.outcome.s_minus,
        "s_rewire": event.outcome.s_rewire,
    }


def iter_lines(trajectory: Trajectory) -> Iterator[str]:
    """Serialized lines of a trajectory, header first."""
    yield json.dumps(_header(trajectory))
    for event in trajectory.events:
        yield json.dumps(_event_record(event))


def write_trajectory(trajectory: Trajectory, path: Union[str, Path]) -> Path:
    """Write a trajectory file, creating parent directories."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for line in iter_lines(trajectory):
                f.write(line)
                f.write("\n")
    except OSError as e:
        raise BCMInferError(f"Cannot write trajectory file {path}: {e}") from e
    logger.debug(f"Wrote {len(trajectory.events)} events to {path}")
    return path


def _parse_event(record: Dict[str, Any], line_no: int) -> InteractionEvent:
    try:
        return InteractionEvent(
            step=int(record["step"]),
            participants=tuple(int(p) for p in record["participants"]),
            outcome=Outcome(
                s_plus=bool(record["s_plus"]),
                s_minus=bool(record["s_minus"]),
                s_rewire=bool(record.get("s_rewire", False)),
            ),
            dynamics=Dynamics(record.get("d", Dynamics.UPDATE.value)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"Malformed event on line {line_no}: {e}") from e


def read_trajectory(path: Union[str, Path]) -> Trajectory:
    """
    Read a trajectory file.

    Raises:
        BCMInferError: if the file cannot be read
        ConfigurationError: if its content is malformed
    """
    path = Path(path)
    try:
        with open(path, "r") as f:
            lines = [line for line in f if line.strip()]
    except OSError as e:
        raise BCMInferError(f"Cannot read trajectory file {path}: {e}") from e

    if not lines:
        raise ConfigurationError(f"Trajectory file {path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Invalid header in {path}: {e}") from e
    if header.get("type") != HEADER:
        raise ConfigurationError(f"First line of {path} is not a trajectory header")

    config = ModelConfig.from_dict(header["config"])
    edges = header.get("initial_edges")
    truth = header.get("truth")

    events = []
    for line_no, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Invalid JSON on line {line_no} of {path}: {e}") from e
        if record.get("type") != EVENT:
            raise ConfigurationError(f"Unexpected record type on line {line_no} of {path}")
        events.append(_parse_event(record, line_no))

    trajectory = Trajectory(
        config=config,
        x0=np.array(header["x0"], dtype=float),
        events=events,
        initial_edges=None if edges is None else [tuple(e) for e in edges],
        truth=None if truth is None else LatentParams.from_dict(truth),
    )
    if trajectory.x0.shape != (config.n_agents,):
        raise ConfigurationError(
            f"{path}: x0 has {trajectory.x0.shape[0]} entries for {config.n_agents} agents"
        )
    logger.debug(f"Read {len(events)} events from {path}")
    return trajectory
