"""
BCMInfer data models.
"""

from models.opinion import Variant, Dynamics, ModelConfig, LatentParams, Outcome, InteractionEvent, Trajectory
from models.inference import Method, PgabmConfig, ConstrainedParams, VariationalParams, PosteriorSamples
from models.experiment import ExperimentSpec, ExperimentCell, ExperimentResult, ResultRow, RunStatus

__all__ = [
    "Variant", "Dynamics", "ModelConfig", "LatentParams", "Outcome", "InteractionEvent", "Trajectory",
    "Method", "PgabmConfig", "ConstrainedParams", "VariationalParams", "PosteriorSamples",
    "ExperimentSpec", "ExperimentCell", "ExperimentResult", "ResultRow", "RunStatus",
]
