"""
Configuration management for BCMInfer.
"""

import copy
import os
import yaml
from pathlib import Path
from typing import Any, Dict, Optional, Union
import logging

from core.errors import ConfigurationError
from models.experiment import SPEC_VERSION, ExperimentSpec

logger = logging.getLogger(__name__)

CONFIG_DIR_ENV = "BCMINFER_CONFIG_DIR"
LOG_LEVEL_ENV = "BCMINFER_LOG_LEVEL"


class Config:
    """Library and CLI configuration manager."""

    DEFAULT_CONFIG = {
        "pgabm": {
            "rho": 32.0,
            "tau": 0.1,
            "prob_floor": 1e-12
        },
        "svi": {
            "learning_rate": 0.01,
            "n_epochs": 20000,
            "elbo_samples_per_step": 1,
            "minibatch_events": None,
            "adam_beta1": 0.9,
            "adam_beta2": 0.999,
            "adam_eps": 1e-8,
            "init_log_scale": -2.0,
            "n_posterior_samples": 200,
            "log_every": 1000
        },
        "hmc": {
            "step_size": 0.05,
            "n_leapfrog": 10,
            "n_burnin": 5000,
            "n_samples": 5000,
            "target_accept": 0.8,
            "log_every": 500
        },
        "abc": {
            "n_sims": 10000,
            "leader_fraction": 0.2
        },
        "simulation": {
            "interactions_per_step": 10,
            "mu": 0.02,
            "graph_density": 0.1,
            "rewire_retries": 100
        },
        "experiment": {
            "time_limit_seconds": 10800,  # 3 hours
            "parallelism": 1,
            "record_wall_time": True
        },
        "paths": {
            "results": "~/BCMInfer/results"
        },
        "logging": {
            "level": "INFO"
        }
    }

    def __init__(self, config_dir: Optional[Union[str, Path]] = None):
        """
        Args:
            config_dir: Directory holding config.yaml. Falls back to
                $BCMINFER_CONFIG_DIR, then the per-user config directory.
        """
        self.config_dir = Path(config_dir or os.environ.get(CONFIG_DIR_ENV) or user_config_dir()).expanduser()
        self.config_file = self.config_dir / "config.yaml"
        self.config_dir.mkdir(parents=True, exist_ok=True)
        self._config = self._read()

    def _read(self) -> dict:
        """Values from config.yaml layered over the defaults; writes the defaults on first use."""
        if not self.config_file.exists():
            self._write(self.DEFAULT_CONFIG)
            return copy.deepcopy(self.DEFAULT_CONFIG)
        try:
            with open(self.config_file, "r") as f:
                stored = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            logger.error(f"Ignoring unreadable config {self.config_file}: {e}")
            return copy.deepcopy(self.DEFAULT_CONFIG)
        if not isinstance(stored, dict):
            logger.error(f"Ignoring config {self.config_file}: top level is not a mapping")
            return copy.deepcopy(self.DEFAULT_CONFIG)
        return merge_config(self.DEFAULT_CONFIG, stored)

    def _write(self, values: Optional[dict] = None):
        try:
            with open(self.config_file, "w") as f:
                yaml.dump(self._config if values is None else values, f, default_flow_style=False)
        except OSError as e:
            logger.error(f"Cannot save config {self.config_file}: {e}")

    def get(self, key: str, default: Any = None) -> Any:
        """
        Look up a dotted key such as "svi.learning_rate".

        Missing keys and keys stored as null both give `default`.
        """
        node = self._config
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return default if node is None else node

    def set(self, key: str, value: Any):
        """Store a dotted key, creating intermediate sections, and save the file."""
        *sections, leaf = key.split(".")
        node = self._config
        for part in sections:
            node = node.setdefault(part, {})
        node[leaf] = value
        self._write()

    def get_path(self, key: str) -> Path:
        """paths.<key>, with ~ expanded."""
        return Path(self.get(f"paths.{key}", "")).expanduser()

    @property
    def results_dir(self) -> Path:
        return self.get_path("results")

    @property
    def log_level(self) -> str:
        """Logging level; $BCMINFER_LOG_LEVEL wins over the file."""
        return os.environ.get(LOG_LEVEL_ENV) or str(self.get("logging.level", "INFO"))


def user_config_dir() -> Path:
    if os.name == "nt":
        return Path(os.environ.get("APPDATA", "~")) / "BCMInfer"
    return Path.home() / ".config" / "bcminfer"


def merge_config(defaults: dict, overrides: dict) -> dict:
    """Recursive merge: sections merge key by key, everything else is replaced."""
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if isinstance(merged.get(key), dict) and isinstance(value, dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = value
    return merged


# === Experiment specs ===

SPEC_KEYS = {
    "spec_version", "variant", "axes", "methods", "latents", "replicates", "time_limit_seconds",
    "output_dir", "master_seed", "parallelism", "record_wall_time", "interactions_per_step",
    "graph_density", "rewire_retries",
    "svi", "hmc", "abc",
}


def parse_experiment_spec(document: Dict[str, Any], config: Optional[Config] = None) -> ExperimentSpec:
    """
    Build an ExperimentSpec from a parsed YAML document.

    Missing run-time settings fall back to the configuration.
    """
    if not isinstance(document, dict):
        raise ConfigurationError("Experiment spec must be a mapping")
    unknown = set(document) - SPEC_KEYS
    if unknown:
        raise ConfigurationError(f"Unknown experiment spec keys: {', '.join(sorted(unknown))}")
    if "spec_version" not in document:
        raise ConfigurationError("Experiment spec needs a spec_version field")
    if document["spec_version"] != SPEC_VERSION:
        raise ConfigurationError(
            f"Unsupported spec_version {document['spec_version']} (expected {SPEC_VERSION})"
        )
    for required in ("variant", "axes", "methods"):
        if required not in document:
            raise ConfigurationError(f"Experiment spec needs a '{required}' field")

    values = dict(document)
    if config is not None:
        values.setdefault("time_limit_seconds", float(config.get("experiment.time_limit_seconds", 10800)))
        values.setdefault("parallelism", int(config.get("experiment.parallelism", 1)))
        values.setdefault("record_wall_time", bool(config.get("experiment.record_wall_time", True)))
        values.setdefault("interactions_per_step", int(config.get("simulation.interactions_per_step", 10)))
        values.setdefault("graph_density", float(config.get("simulation.graph_density", 0.1)))
        values.setdefault("rewire_retries", int(config.get("simulation.rewire_retries", 100)))
        values.setdefault("output_dir", str(config.results_dir))
    for section in ("svi", "hmc", "abc", "latents"):
        if values.get(section) is None:
            values[section] = {}
    return ExperimentSpec(**values)


def load_experiment_spec(path: Union[str, Path], config: Optional[Config] = None) -> ExperimentSpec:
    """Load a versioned YAML experiment spec."""
    path = Path(path)
    try:
        with open(path, "r") as f:
            document = yaml.safe_load(f)
    except OSError as e:
        raise ConfigurationError(f"Cannot read experiment spec {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Invalid YAML in experiment spec {path}: {e}") from e
    spec = parse_experiment_spec(document, config)
    logger.info(f"Loaded experiment spec {path}: {spec.variant.value}, methods {[m.value for m in spec.methods]}")
    return spec
