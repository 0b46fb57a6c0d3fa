"""
BCMInfer utility modules.
"""

from utils.config import Config, load_experiment_spec
from utils.database import ResultsDatabase
from utils.trajectory_io import read_trajectory, write_trajectory

__all__ = ["Config", "load_experiment_spec", "ResultsDatabase", "read_trajectory", "write_trajectory"]
